#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "ip/models.hpp"
#include "ip/numerics.hpp"
#include "ip/serialize.hpp"

using namespace ip;
namespace fs = std::filesystem;

namespace {

Vector random_vector(int dim, Rng& rng, double scale = 1.0) {
  Vector v(dim);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

ContextSequence random_sequence(int dim, Rng& rng) {
  ContextSequence seq;
  for (int r = 0; r < kContextSteps; ++r) seq.regions[r] = random_vector(dim, rng);
  return seq;
}

// Flattens a model's parameters, runs grad_check against its analytic
// gradient on one example.
template <typename Model>
double model_grad_error(const Model& model, const typename Model::Example& ex) {
  Model grads = model.zeros_like();
  Model mutable_model = model;
  mutable_model.loss_and_grad(ex, grads);

  std::vector<double*> gp = grads.param_ptrs();
  std::vector<double*> wp = mutable_model.param_ptrs();
  std::vector<double> params(wp.size()), analytic(wp.size());
  for (std::size_t i = 0; i < wp.size(); ++i) {
    params[i] = *wp[i];
    analytic[i] = *gp[i];
  }
  auto loss_fn = [&](const std::vector<double>& p) {
    Model m = model;
    std::vector<double*> ptrs = m.param_ptrs();
    for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = p[i];
    Model g = m.zeros_like();
    return m.loss_and_grad(ex, g);
  };
  return grad_check(loss_fn, params, analytic, 1e-5);
}

}  // namespace

TEST_CASE("all-zero LSTM parameters give the closed-form fixed point") {
  const LstmParams p = make_lstm(3, 2);
  LstmState s = zero_state(3);
  const Vector x = {0.4, -1.7};
  for (int t = 0; t < 5; ++t) {
    const LstmStepResult r = lstm_step(p, x, s);
    for (int i = 0; i < 3; ++i) {
      // All gates see zero pre-activations; the cell stays at zero.
      CHECK(r.output[i] == doctest::Approx(0.5).epsilon(1e-15));
      CHECK(r.state.c[i] == doctest::Approx(0.0));
      CHECK(r.state.h[i] == doctest::Approx(0.0));
    }
    s = r.state;
  }
}

TEST_CASE("saturated forget gate preserves the cell; closed input gate adds nothing") {
  LstmParams p = make_lstm(2, 2);
  for (double& b : p.b_f) b = 50.0;   // forget ~ 1
  for (double& b : p.b_i) b = -50.0;  // input ~ 0
  LstmState s = zero_state(2);
  s.c = {0.7, -0.3};
  const LstmStepResult r = lstm_step(p, {1.0, -2.0}, s);
  CHECK(r.state.c[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(r.state.c[1] == doctest::Approx(-0.3).epsilon(1e-12));
}

TEST_CASE("lstm_step validates shapes") {
  const LstmParams p = make_lstm(3, 2);
  CHECK_THROWS(lstm_step(p, Vector{1.0}, zero_state(3)));
  CHECK_THROWS(lstm_step(p, Vector{1.0, 2.0}, zero_state(2)));
}

TEST_CASE("head scores match a hand-computed softmax") {
  ClassifierHead head = make_head(1, 1, 2);
  head.w1(0, 0) = 2.0;
  head.w2(0, 0) = 1.0;
  head.w2(1, 0) = -1.0;
  const Vector y = head_scores(head, {1.0});
  // relu(2) = 2 -> z = (2, -2)
  CHECK(y[0] == doctest::Approx(0.9820137900379085).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(0.017986209962091555).epsilon(1e-14));

  // Negative input is clipped by the relu: both classes tie.
  const Vector y2 = head_scores(head, {-1.0});
  CHECK(y2[0] == doctest::Approx(0.5));
  CHECK(y2[1] == doctest::Approx(0.5));
}

TEST_CASE("structural forward equals the mean of per-step head scores") {
  Rng rng(17);
  StructuralModel model;
  model.lstm = init_lstm(5, 3, rng);
  model.head = init_head(4, 5, 3, rng);
  const ContextSequence seq = random_sequence(3, rng);

  // Recompute through the public step API.
  LstmState s = zero_state(5);
  Vector mean(3, 0.0);
  for (int t = 0; t < kContextSteps; ++t) {
    const LstmStepResult r = lstm_step(model.lstm, seq.regions[t], s);
    const Vector scores = head_scores(model.head, r.output);
    for (int i = 0; i < 3; ++i) mean[i] += scores[i] / kContextSteps;
    s = r.state;
  }
  const Vector got = model.forward(seq);
  for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(mean[i]).epsilon(1e-14));
  double sum = 0.0;
  for (double v : got) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("heads read the output gate, not the hidden state") {
  // With b_o = 10 the output gate saturates at 1 while h = tanh(c) stays
  // small; scores computed from o must reflect the saturated gate.
  Rng rng(19);
  StructuralModel model;
  model.lstm = init_lstm(4, 2, rng);
  for (double& b : model.lstm.b_o) b = 10.0;
  model.head = make_head(2, 4, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) model.head.w1(i, j) = 1.0;
  model.head.w2(0, 0) = 1.0;  // class 1 collects the summed activations
  ContextSequence seq;
  for (int r = 0; r < kContextSteps; ++r) seq.regions[r] = {0.01, -0.01};

  LstmState s = zero_state(4);
  LstmStepResult last;
  for (int t = 0; t < kContextSteps; ++t) {
    last = lstm_step(model.lstm, seq.regions[t], s);
    s = last.state;
  }
  // Gate saturation: o ~ 1 everywhere, h clearly below it.
  for (int i = 0; i < 4; ++i) {
    CHECK(last.output[i] > 0.99);
    CHECK(std::fabs(last.state.h[i]) < 0.9);
  }
  // If the head consumed h instead of o, z1 would differ from 4 * relu-sum.
  const Vector scores = head_scores(model.head, last.output);
  const Vector scores_h = head_scores(model.head, last.state.h);
  CHECK(scores[0] != doctest::Approx(scores_h[0]).epsilon(1e-6));
}

TEST_CASE("temporal collapse with a delta kernel picks one time step") {
  TemporalConvParams conv = make_temporal_conv(4, 3);
  for (int c = 0; c < 3; ++c) conv.kernel(2, c) = 1.0;
  std::vector<Vector> stack = {{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}, {7.0, 8.0, 9.0},
                               {10.0, 11.0, 12.0}};
  const Vector out = temporal_collapse(conv, stack);
  CHECK(out == Vector{7.0, 8.0, 9.0});
}

TEST_CASE("temporal collapse with a uniform kernel averages the stack") {
  TemporalConvParams conv = make_temporal_conv(4, 2);
  for (int t = 0; t < 4; ++t)
    for (int c = 0; c < 2; ++c) conv.kernel(t, c) = 0.25;
  std::vector<Vector> stack = {{0.0, 4.0}, {1.0, 4.0}, {2.0, 4.0}, {3.0, 4.0}};
  const Vector out = temporal_collapse(conv, stack);
  CHECK(out[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(4.0).epsilon(1e-15));

  CHECK_THROWS(temporal_collapse(conv, {{1.0, 2.0}}));            // wrong stack length
  CHECK_THROWS(temporal_collapse(conv, {{1.0}, {1.0}, {1.0}, {1.0}}));  // wrong channel dim
}

TEST_CASE("pad_flow_sequence examples and properties") {
  const std::vector<int> f5 = {10, 20, 30, 40, 50};
  CHECK(pad_flow_sequence(f5, 5, 3) == std::vector<int>{30, 40, 50});
  CHECK(pad_flow_sequence(f5, 5, 5) == f5);
  const std::vector<int> f2 = {10, 20};
  CHECK(pad_flow_sequence(f2, 2, 5) == std::vector<int>{10, 20, 20, 20, 20});
  CHECK(pad_flow_sequence(std::vector<int>{7}, 1, 4) == std::vector<int>{7, 7, 7, 7});

  for (int t = 1; t <= 12; ++t) {
    std::vector<int> flows(t);
    for (int i = 0; i < t; ++i) flows[i] = i + 1;
    for (int k = 1; k <= 9; ++k) {
      const std::vector<int> out = pad_flow_sequence(flows, t, k);
      REQUIRE(static_cast<int>(out.size()) == k);
      if (t >= k) {
        for (int i = 0; i < k; ++i) CHECK(out[i] == t - k + i + 1);
      } else {
        for (int i = 0; i < t; ++i) CHECK(out[i] == i + 1);
        for (int i = t; i < k; ++i) CHECK(out[i] == t);
      }
    }
  }

  CHECK_THROWS(pad_flow_sequence(f5, 4, 3));  // size/t mismatch
  CHECK_THROWS(pad_flow_sequence(std::vector<int>{}, 0, 3));
  CHECK_THROWS(pad_flow_sequence(f5, 5, 0));
}

TEST_CASE("spatial model gradient matches finite differences") {
  Rng rng(7);
  SpatialModel model;
  model.head = init_head(4, 3, 3, rng);
  const FeatureExample ex{random_vector(3, rng), 2};
  CHECK(model_grad_error(model, ex) < 1e-6);
}

TEST_CASE("temporal model gradient matches finite differences") {
  Rng rng(7);
  TemporalModel model;
  model.conv = init_temporal_conv(4, 3, rng);
  model.head = init_head(4, 3, 3, rng);
  WindowExample ex;
  for (int t = 0; t < 4; ++t) ex.stack.push_back(random_vector(3, rng));
  ex.label = 3;
  CHECK(model_grad_error(model, ex) < 1e-6);
}

TEST_CASE("structural model gradient matches finite differences through time") {
  Rng rng(7);
  StructuralModel model;
  model.lstm = init_lstm(4, 3, rng);
  model.head = init_head(4, 4, 3, rng);
  const SequenceExample ex{random_sequence(3, rng), 1};
  CHECK(model_grad_error(model, ex) < 1e-4);
}

TEST_CASE("loss_and_grad accumulates across examples") {
  Rng rng(13);
  SpatialModel model;
  model.head = init_head(3, 2, 2, rng);
  const FeatureExample e1{{0.5, -1.0}, 1};
  const FeatureExample e2{{-0.25, 2.0}, 2};

  SpatialModel g1 = model.zeros_like(), g2 = model.zeros_like(), acc = model.zeros_like();
  model.loss_and_grad(e1, g1);
  model.loss_and_grad(e2, g2);
  const double l1 = model.loss_and_grad(e1, acc);
  const double l2 = model.loss_and_grad(e2, acc);
  CHECK(l1 == doctest::Approx(-std::log(model.forward(e1.input)[0])).epsilon(1e-12));
  CHECK(l2 > 0.0);

  std::vector<double*> pa = acc.param_ptrs(), p1 = g1.param_ptrs(), p2 = g2.param_ptrs();
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(*pa[i] == doctest::Approx(*p1[i] + *p2[i]).epsilon(1e-12));
}

TEST_CASE("param_ptrs covers every parameter exactly once") {
  Rng rng(3);
  StructuralModel model;
  model.lstm = init_lstm(3, 2, rng);
  model.head = init_head(2, 3, 2, rng);
  std::vector<double*> ptrs = model.param_ptrs();
  const std::size_t lstm_count = 4 * (3 * 2) + 5 * (3 * 3) + 4 * 3;  // w_*, u_* + v_o, b_*
  const std::size_t head_count = 2 * 3 + 2 + 2 * 2 + 2;
  CHECK(ptrs.size() == lstm_count + head_count);
  std::set<double*> unique(ptrs.begin(), ptrs.end());
  CHECK(unique.size() == ptrs.size());

  // Writing through the pointers must change the forward pass.
  const ContextSequence seq = random_sequence(2, rng);
  const Vector before = model.forward(seq);
  for (double* p : ptrs) *p += 0.05;
  const Vector after = model.forward(seq);
  bool changed = false;
  for (int i = 0; i < 2; ++i) changed = changed || std::fabs(before[i] - after[i]) > 1e-9;
  CHECK(changed);
}

TEST_CASE("region order matters to the structural model") {
  Rng rng(29);
  StructuralModel model;
  model.lstm = init_lstm(6, 4, rng);
  model.head = init_head(4, 6, 3, rng);
  ContextSequence seq = random_sequence(4, rng);
  const Vector base = model.forward(seq);
  std::swap(seq.regions[0], seq.regions[6]);
  const Vector swapped = model.forward(seq);
  double diff = 0.0;
  for (int i = 0; i < 3; ++i) diff = std::max(diff, std::fabs(base[i] - swapped[i]));
  CHECK(diff > 1e-10);
}

namespace {

// Plain softmax regression: convex, so full-batch descent with a small
// step must give a non-increasing loss trace.
struct LogisticModel {
  struct Ex {
    Vector x;
    int label;
  };
  using Example = Ex;
  Matrix w;  // classes x dim

  int classes() const { return w.rows; }
  LogisticModel zeros_like() const { return {Matrix(w.rows, w.cols, 0.0)}; }
  std::vector<double*> param_ptrs() {
    std::vector<double*> out;
    for (double& v : w.data) out.push_back(&v);
    return out;
  }
  double loss_and_grad(const Ex& ex, LogisticModel& grads) const {
    const Vector y = softmax(matvec(w, ex.x));
    Vector dz = y;
    dz[ex.label - 1] -= 1.0;
    outer_add(dz, ex.x, grads.w);
    return -std::log(std::max(y[ex.label - 1], 1e-300));
  }
};

}  // namespace

TEST_CASE("full-batch descent on a convex problem never increases the loss") {
  Rng rng(41);
  std::vector<LogisticModel::Ex> data;
  for (int i = 0; i < 40; ++i) {
    const int label = 1 + (i % 2);
    Vector x = random_vector(3, rng, 0.5);
    x[0] += (label == 1) ? 1.0 : -1.0;
    data.push_back({x, label});
  }
  LogisticModel model{Matrix(2, 3, 0.0)};
  TrainHyper hp;
  hp.learning_rate = 0.05;
  hp.epochs = 60;
  hp.batch_size = static_cast<int>(data.size());
  hp.seed = 1;
  const TrainResult r = train_model(model, data, hp);
  REQUIRE(r.loss_trace.size() == 60);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
    CHECK(r.loss_trace[i] <= r.loss_trace[i - 1] + 1e-12);
}

TEST_CASE("training is bitwise deterministic in the seed") {
  Rng rng_a(55), rng_b(55), rng_c(56);
  auto make = [](Rng& rng) {
    SpatialModel m;
    m.head = init_head(6, 4, 3, rng);
    return m;
  };
  SpatialModel a = make(rng_a), b = make(rng_b), c = make(rng_c);

  std::vector<FeatureExample> data;
  Rng drng(77);
  for (int i = 0; i < 30; ++i) data.push_back({random_vector(4, drng), 1 + (i % 3)});

  TrainHyper hp;
  hp.learning_rate = 0.1;
  hp.epochs = 5;
  hp.batch_size = 8;
  hp.seed = 9;
  const TrainResult ra = train_model(a, data, hp);
  const TrainResult rb = train_model(b, data, hp);
  hp.seed = 10;
  train_model(c, data, hp);

  CHECK(ra.loss_trace == rb.loss_trace);
  std::vector<double*> pa = a.param_ptrs(), pb = b.param_ptrs(), pc = c.param_ptrs();
  bool identical = true, differs_from_c = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (*pa[i] != *pb[i]) identical = false;
    if (*pa[i] != *pc[i]) differs_from_c = true;
  }
  CHECK(identical);
  CHECK(differs_from_c);
}

TEST_CASE("a separable two-class problem is learned to full training accuracy") {
  Rng rng(61);
  std::vector<FeatureExample> data;
  for (int i = 0; i < 60; ++i) {
    const int label = 1 + (i % 2);
    Vector x = random_vector(2, rng, 0.3);
    x[0] += (label == 1) ? 1.0 : -1.0;
    data.push_back({x, label});
  }
  SpatialModel model;
  Rng init(62);
  model.head = init_head(8, 2, 2, init);
  TrainHyper hp;
  hp.learning_rate = 0.2;
  hp.epochs = 200;
  hp.batch_size = 16;
  hp.seed = 5;
  train_model(model, data, hp);
  int correct = 0;
  for (const auto& ex : data) {
    const Vector y = model.forward(ex.input);
    const int pred = (y[0] >= y[1]) ? 1 : 2;
    if (pred == ex.label) ++correct;
  }
  CHECK(correct == 60);
}

namespace {

// One-parameter quadratic; an absurd step size makes it diverge to inf,
// which train_model must refuse to continue from.
struct QuadModel {
  struct Ex {
    double target;
  };
  using Example = Ex;
  double w = 1.0;
  QuadModel zeros_like() const { return {0.0}; }
  std::vector<double*> param_ptrs() { return {&w}; }
  double loss_and_grad(const Ex& ex, QuadModel& g) const {
    g.w += 2.0 * (w - ex.target);
    return (w - ex.target) * (w - ex.target);
  }
};

}  // namespace

TEST_CASE("train_model rejects bad input and non-finite losses") {
  SpatialModel model;
  Rng rng(1);
  model.head = init_head(2, 2, 2, rng);
  std::vector<FeatureExample> data = {{{1.0, 2.0}, 1}};
  TrainHyper hp;
  CHECK_THROWS(train_model(model, std::vector<FeatureExample>{}, hp));
  hp.learning_rate = -1.0;
  CHECK_THROWS(train_model(model, data, hp));

  QuadModel quad;
  std::vector<QuadModel::Ex> qdata = {{0.0}};
  TrainHyper qhp;
  qhp.learning_rate = 1e300;
  qhp.epochs = 5;
  qhp.batch_size = 1;
  qhp.clip_norm = 1e308;
  CHECK_THROWS_WITH_AS(train_model(quad, qdata, qhp), doctest::Contains("non-finite"),
                       std::runtime_error);
}

TEST_CASE("model checkpoints round-trip exactly") {
  Rng rng(71);
  const fs::path dir = fs::temp_directory_path() / "ip_ckpt_test";
  fs::create_directories(dir);

  ModelBundle bundle;
  bundle.spatial.head = init_head(3, 4, 3, rng);
  bundle.temporal.conv = init_temporal_conv(5, 4, rng);
  bundle.temporal.head = init_head(3, 4, 3, rng);
  bundle.spatial_structural.lstm = init_lstm(4, 4, rng);
  bundle.spatial_structural.head = init_head(3, 4, 3, rng);
  bundle.temporal_structural.lstm = init_lstm(4, 4, rng);
  bundle.temporal_structural.head = init_head(3, 4, 3, rng);

  save_model_bundle(dir.string(), bundle, "cafebabe");
  const ModelBundle back = load_model_bundle(dir.string());

  ModelBundle mutable_bundle = bundle;  // param_ptrs is non-const
  ModelBundle mutable_back = back;
  auto check_equal = [](auto& x, auto& y) {
    std::vector<double*> px = x.param_ptrs(), py = y.param_ptrs();
    REQUIRE(px.size() == py.size());
    for (std::size_t i = 0; i < px.size(); ++i) CHECK(*px[i] == *py[i]);
  };
  check_equal(mutable_bundle.spatial, mutable_back.spatial);
  check_equal(mutable_bundle.temporal, mutable_back.temporal);
  check_equal(mutable_bundle.spatial_structural, mutable_back.spatial_structural);
  check_equal(mutable_bundle.temporal_structural, mutable_back.temporal_structural);

  fs::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects the wrong model kind") {
  Rng rng(73);
  const fs::path dir = fs::temp_directory_path() / "ip_ckpt_kind";
  fs::create_directories(dir);
  SpatialModel spatial;
  spatial.head = init_head(2, 3, 2, rng);
  const std::string path = (dir / "m.json").string();
  save_spatial_model(path, spatial, "h");
  CHECK_THROWS_WITH_AS(load_temporal_model(path), doctest::Contains("spatial"),
                       std::runtime_error);
  CHECK_NOTHROW(load_spatial_model(path));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects tampered shapes") {
  Rng rng(74);
  const fs::path dir = fs::temp_directory_path() / "ip_ckpt_shape";
  fs::create_directories(dir);
  StructuralModel model;
  model.lstm = init_lstm(3, 2, rng);
  model.head = init_head(2, 3, 2, rng);
  const std::string path = (dir / "m.json").string();
  save_structural_model(path, model, "spatial_structural", "h");

  // Truncate one row of u_f in the file.
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const std::size_t pos = text.find("\"u_f\"");
  REQUIRE(pos != std::string::npos);
  const std::size_t open = text.find('[', pos);
  const std::size_t close = text.find(']', open);
  std::string tampered = text.substr(0, open + 1) + text.substr(close);
  std::ofstream out(path);
  out << tampered;
  out.close();
  CHECK_THROWS(load_structural_model(path, "spatial_structural"));
  fs::remove_all(dir);
}
