#include "ip/cli.hpp"

int main(int argc, char** argv) {
  return ip::run_cli({argv + 1, argv + argc});
}
