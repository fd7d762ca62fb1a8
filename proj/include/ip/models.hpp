#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ip/context.hpp"
#include "ip/numerics.hpp"

namespace ip {

// Gate parameters. w_* act on the input, u_* on the previous hidden state,
// v_o on the current cell (the output gate sees the cell it is about to
// expose). Biases live in b_*.
struct LstmParams {
  Matrix w_f, u_f, w_c, u_c, w_i, u_i, w_o, u_o, v_o;
  Vector b_f, b_c, b_i, b_o;

  int hidden() const { return w_f.rows; }
  int input_dim() const { return w_f.cols; }
};

LstmParams make_lstm(int hidden, int input_dim);            // zeros
LstmParams init_lstm(int hidden, int input_dim, Rng& rng);  // scaled uniform, zero biases

struct LstmState {
  Vector c, h;
};
LstmState zero_state(int hidden);

struct LstmStepResult {
  LstmState state;
  Vector output;  // o_t, the gate activations; this is what heads consume
};

LstmStepResult lstm_step(const LstmParams& p, const Vector& x, const LstmState& prev);

// Two-layer scoring head: softmax(w2 * relu(w1 * in + b1) + b2).
struct ClassifierHead {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  int input_dim() const { return w1.cols; }
  int hidden() const { return w1.rows; }
  int classes() const { return w2.rows; }
};

ClassifierHead make_head(int hidden, int input_dim, int classes);
ClassifierHead init_head(int hidden, int input_dim, int classes, Rng& rng);

Vector head_scores(const ClassifierHead& head, const Vector& input);

// One kernel weight per (time step, channel); collapses k vectors into one.
struct TemporalConvParams {
  Matrix kernel;  // k x channels

  int k() const { return kernel.rows; }
  int channels() const { return kernel.cols; }
};

TemporalConvParams make_temporal_conv(int k, int channels);
TemporalConvParams init_temporal_conv(int k, int channels, Rng& rng);

Vector temporal_collapse(const TemporalConvParams& conv, const std::vector<Vector>& stack);

// Score functions for the four model kinds. Structural runs the LSTM over
// the 7 context regions from a zero state and averages the per-step head
// scores; spatial scores one feature; temporal scores a k-stack of flow
// features.
Vector structural_forward(const LstmParams& lstm, const ClassifierHead& head,
                          const ContextSequence& seq);
Vector spatial_forward(const ClassifierHead& head, const Vector& feat);
Vector temporal_forward(const TemporalConvParams& conv, const ClassifierHead& head,
                        const std::vector<Vector>& stack);

// Test-time flow padding. flows_so_far must hold exactly t entries, t >= 1.
// Returns the last k entries when t >= k; otherwise the full prefix with
// the t-th entry repeated k - t times.
template <typename T>
std::vector<T> pad_flow_sequence(const std::vector<T>& flows_so_far, int t, int k) {
  if (k < 1) throw std::invalid_argument("pad_flow_sequence: k must be >= 1");
  if (t < 1 || flows_so_far.empty())
    throw std::invalid_argument("pad_flow_sequence: need at least one flow entry");
  if (static_cast<int>(flows_so_far.size()) != t)
    throw std::invalid_argument("pad_flow_sequence: flows_so_far must hold exactly t entries");
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(k));
  if (t >= k) {
    out.assign(flows_so_far.end() - k, flows_so_far.end());
  } else {
    out = flows_so_far;
    for (int i = t; i < k; ++i) out.push_back(flows_so_far.back());
  }
  return out;
}

// Training examples.
struct FeatureExample {
  Vector input;
  int label = 0;  // 1..m
};

struct WindowExample {
  std::vector<Vector> stack;  // k flow features
  int label = 0;
};

struct SequenceExample {
  ContextSequence seq;
  int label = 0;
};

// The three trainable model kinds. Each exposes: forward scores, a
// loss_and_grad that accumulates cross-entropy gradients into a same-shape
// grads object, and a flat view of its parameters for updates and checks.
struct SpatialModel {
  using Example = FeatureExample;
  ClassifierHead head;

  int classes() const { return head.classes(); }
  SpatialModel zeros_like() const;
  Vector forward(const Vector& feat) const { return spatial_forward(head, feat); }
  double loss_and_grad(const Example& ex, SpatialModel& grads) const;
  std::vector<double*> param_ptrs();
};

struct TemporalModel {
  using Example = WindowExample;
  TemporalConvParams conv;
  ClassifierHead head;

  int classes() const { return head.classes(); }
  TemporalModel zeros_like() const;
  Vector forward(const std::vector<Vector>& stack) const {
    return temporal_forward(conv, head, stack);
  }
  double loss_and_grad(const Example& ex, TemporalModel& grads) const;
  std::vector<double*> param_ptrs();
};

struct StructuralModel {
  using Example = SequenceExample;
  LstmParams lstm;
  ClassifierHead head;

  int classes() const { return head.classes(); }
  StructuralModel zeros_like() const;
  Vector forward(const ContextSequence& seq) const {
    return structural_forward(lstm, head, seq);
  }
  double loss_and_grad(const Example& ex, StructuralModel& grads) const;
  std::vector<double*> param_ptrs();
};

// All four models used by fusion and prediction, fixed row order:
// spatial, temporal, spatial-structural, temporal-structural.
struct ModelBundle {
  SpatialModel spatial;
  TemporalModel temporal;
  StructuralModel spatial_structural;
  StructuralModel temporal_structural;

  int classes() const { return spatial.classes(); }
};

struct TrainHyper {
  double learning_rate = 0.1;
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
};

struct TrainResult {
  std::vector<double> loss_trace;  // mean example loss per epoch
};

// Mini-batch gradient descent with seeded shuffling and global-norm
// clipping. Batch gradients are averaged; example order inside a batch is
// fixed, so equal seeds give bitwise-equal parameters.
template <typename Model>
TrainResult train_model(Model& model, const std::vector<typename Model::Example>& data,
                        const TrainHyper& hp) {
  if (data.empty()) throw std::invalid_argument("train_model: empty training set");
  if (hp.learning_rate <= 0.0 || hp.epochs < 1 || hp.batch_size < 1)
    throw std::invalid_argument("train_model: bad hyperparameters");

  Model grads = model.zeros_like();
  const std::vector<double*> wp = model.param_ptrs();
  const std::vector<double*> gp = grads.param_ptrs();

  Rng rng(hp.seed);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      for (double* g : gp) *g = 0.0;
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i)
        batch_loss += model.loss_and_grad(data[order[i]], grads);
      const double inv = 1.0 / static_cast<double>(end - start);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train_model: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch starting at " +
                                 std::to_string(start));
      epoch_loss += batch_loss;

      double norm_sq = 0.0;
      for (double* g : gp) {
        *g *= inv;
        norm_sq += (*g) * (*g);
      }
      const double norm = std::sqrt(norm_sq);
      const double scale = (norm > hp.clip_norm) ? hp.clip_norm / norm : 1.0;
      for (std::size_t j = 0; j < wp.size(); ++j)
        *wp[j] -= hp.learning_rate * scale * *gp[j];
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return result;
}

}  // namespace ip
