#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ip/context.hpp"

namespace ip {

namespace {

// Reads one whitespace/comment-delimited token of a PNM header.
std::string next_token(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string junk;
      std::getline(in, junk);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  in >> tok;
  return tok;
}

unsigned char to_byte(float v) {
  const float r = std::round(v);
  return static_cast<unsigned char>(std::clamp(r, 0.0f, 255.0f));
}

}  // namespace

Image load_image_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_image_pnm: cannot open " + path);
  const std::string magic = next_token(in);
  if (magic != "P5" && magic != "P6")
    throw std::runtime_error("load_image_pnm: " + path + " is not binary PGM/PPM");
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("load_image_pnm: unsupported header in " + path);
  in.get();  // single whitespace after maxval

  const int ch = (magic == "P6") ? 3 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * ch);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw std::runtime_error("load_image_pnm: truncated pixel data in " + path);

  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const std::size_t src = (static_cast<std::size_t>(y) * w + x) * ch + (ch == 3 ? c : 0);
        img.at(x, y, c) = static_cast<float>(buf[src]);
      }
  return img;
}

void save_image_pgm(const std::string& path, const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("save_image_pgm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_image_pgm: cannot open " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      buf[static_cast<std::size_t>(y) * img.width + x] = to_byte(img.at(x, y, 0));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("save_image_pgm: write failed for " + path);
}

void save_image_ppm(const std::string& path, const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("save_image_ppm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_image_ppm: cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(img.width) * img.height * 3);
  std::size_t i = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) buf[i++] = to_byte(img.at(x, y, c));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("save_image_ppm: write failed for " + path);
}

}  // namespace ip
