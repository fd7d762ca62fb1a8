#include "ip/models.hpp"

#include <algorithm>
#include <cmath>

namespace ip {

namespace {

void append_ptrs(Matrix& m, std::vector<double*>& out) {
  for (double& v : m.data) out.push_back(&v);
}

void append_ptrs(Vector& v, std::vector<double*>& out) {
  for (double& x : v) out.push_back(&x);
}

Vector hadamard(const Vector& a, const Vector& b) {
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

double clamp_prob(double p) { return std::max(p, 1e-300); }

void check_label(int label, int classes, const char* who) {
  if (label < 1 || label > classes)
    throw std::invalid_argument(std::string(who) + ": label " + std::to_string(label) +
                                " outside 1.." + std::to_string(classes));
}

struct HeadCache {
  Vector input, a, r, y;
};

Vector head_forward_cached(const ClassifierHead& head, const Vector& input, HeadCache& cache) {
  cache.input = input;
  cache.a = matvec(head.w1, input);
  axpy(1.0, head.b1, cache.a);
  cache.r.resize(cache.a.size());
  for (std::size_t i = 0; i < cache.a.size(); ++i) cache.r[i] = relu(cache.a[i]);
  Vector z = matvec(head.w2, cache.r);
  axpy(1.0, head.b2, z);
  cache.y = softmax(z);
  return cache.y;
}

// Backprop through softmax + both layers; returns d(loss)/d(input).
Vector head_backward(const ClassifierHead& head, const HeadCache& cache, const Vector& dy,
                     ClassifierHead& g) {
  const Vector& y = cache.y;
  const double mixed = dot(dy, y);
  Vector dz(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dz[i] = y[i] * (dy[i] - mixed);

  outer_add(dz, cache.r, g.w2);
  axpy(1.0, dz, g.b2);
  Vector dr(cache.r.size(), 0.0);
  matvec_transpose_add(head.w2, dz, dr);
  Vector da(dr.size());
  for (std::size_t i = 0; i < dr.size(); ++i) da[i] = cache.a[i] > 0.0 ? dr[i] : 0.0;
  outer_add(da, cache.input, g.w1);
  axpy(1.0, da, g.b1);
  Vector din(cache.input.size(), 0.0);
  matvec_transpose_add(head.w1, da, din);
  return din;
}

struct LstmStepCache {
  Vector x, c_prev, h_prev;
  Vector f, ctilde, i, c, o, tanh_c;
};

LstmStepResult lstm_step_cached(const LstmParams& p, const Vector& x, const LstmState& prev,
                                LstmStepCache& cache) {
  if (static_cast<int>(x.size()) != p.input_dim())
    throw std::invalid_argument("lstm_step: input dim " + std::to_string(x.size()) +
                                " != " + std::to_string(p.input_dim()));
  if (static_cast<int>(prev.c.size()) != p.hidden() ||
      static_cast<int>(prev.h.size()) != p.hidden())
    throw std::invalid_argument("lstm_step: state dim mismatch");

  cache.x = x;
  cache.c_prev = prev.c;
  cache.h_prev = prev.h;

  auto gate_pre = [&](const Matrix& w, const Matrix& u, const Vector& b) {
    Vector pre = matvec(w, x);
    matvec_add(u, prev.h, pre);
    axpy(1.0, b, pre);
    return pre;
  };

  Vector pre = gate_pre(p.w_f, p.u_f, p.b_f);
  cache.f.resize(pre.size());
  for (std::size_t j = 0; j < pre.size(); ++j) cache.f[j] = sigmoid(pre[j]);

  pre = gate_pre(p.w_c, p.u_c, p.b_c);
  cache.ctilde.resize(pre.size());
  for (std::size_t j = 0; j < pre.size(); ++j) cache.ctilde[j] = std::tanh(pre[j]);

  pre = gate_pre(p.w_i, p.u_i, p.b_i);
  cache.i.resize(pre.size());
  for (std::size_t j = 0; j < pre.size(); ++j) cache.i[j] = sigmoid(pre[j]);

  cache.c.resize(pre.size());
  for (std::size_t j = 0; j < pre.size(); ++j)
    cache.c[j] = cache.i[j] * cache.ctilde[j] + cache.f[j] * prev.c[j];

  // The output gate peeks at the freshly updated cell.
  pre = gate_pre(p.w_o, p.u_o, p.b_o);
  matvec_add(p.v_o, cache.c, pre);
  cache.o.resize(pre.size());
  for (std::size_t j = 0; j < pre.size(); ++j) cache.o[j] = sigmoid(pre[j]);

  cache.tanh_c.resize(pre.size());
  for (std::size_t j = 0; j < pre.size(); ++j) cache.tanh_c[j] = std::tanh(cache.c[j]);

  LstmStepResult res;
  res.state.c = cache.c;
  res.state.h = hadamard(cache.o, cache.tanh_c);
  res.output = cache.o;
  return res;
}

// One step of backprop through time. do_ext is the gradient flowing into
// o_t from outside the recurrence (the head); dh/dc are carries from step
// t+1 and are replaced with the carries for step t-1.
void lstm_step_backward(const LstmParams& p, const LstmStepCache& cache, const Vector& do_ext,
                        Vector& dh, Vector& dc, LstmParams& g) {
  const std::size_t d = cache.f.size();

  Vector do_full(d), dpre_o(d);
  for (std::size_t j = 0; j < d; ++j)
    do_full[j] = do_ext[j] + dh[j] * cache.tanh_c[j];
  for (std::size_t j = 0; j < d; ++j)
    dpre_o[j] = do_full[j] * cache.o[j] * (1.0 - cache.o[j]);

  // Cell gradient: carry, the h = o * tanh(c) path, and the peephole.
  Vector dcell = dc;
  for (std::size_t j = 0; j < d; ++j)
    dcell[j] += dh[j] * cache.o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
  matvec_transpose_add(p.v_o, dpre_o, dcell);

  Vector dpre_f(d), dpre_i(d), dpre_c(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double df = dcell[j] * cache.c_prev[j];
    const double di = dcell[j] * cache.ctilde[j];
    const double dct = dcell[j] * cache.i[j];
    dpre_f[j] = df * cache.f[j] * (1.0 - cache.f[j]);
    dpre_i[j] = di * cache.i[j] * (1.0 - cache.i[j]);
    dpre_c[j] = dct * (1.0 - cache.ctilde[j] * cache.ctilde[j]);
  }

  outer_add(dpre_f, cache.x, g.w_f);
  outer_add(dpre_f, cache.h_prev, g.u_f);
  axpy(1.0, dpre_f, g.b_f);
  outer_add(dpre_c, cache.x, g.w_c);
  outer_add(dpre_c, cache.h_prev, g.u_c);
  axpy(1.0, dpre_c, g.b_c);
  outer_add(dpre_i, cache.x, g.w_i);
  outer_add(dpre_i, cache.h_prev, g.u_i);
  axpy(1.0, dpre_i, g.b_i);
  outer_add(dpre_o, cache.x, g.w_o);
  outer_add(dpre_o, cache.h_prev, g.u_o);
  outer_add(dpre_o, cache.c, g.v_o);
  axpy(1.0, dpre_o, g.b_o);

  std::fill(dh.begin(), dh.end(), 0.0);
  matvec_transpose_add(p.u_f, dpre_f, dh);
  matvec_transpose_add(p.u_c, dpre_c, dh);
  matvec_transpose_add(p.u_i, dpre_i, dh);
  matvec_transpose_add(p.u_o, dpre_o, dh);

  for (std::size_t j = 0; j < d; ++j) dc[j] = dcell[j] * cache.f[j];
}

}  // namespace

LstmParams make_lstm(int hidden, int input_dim) {
  if (hidden < 1 || input_dim < 1)
    throw std::invalid_argument("make_lstm: dims must be positive");
  LstmParams p;
  p.w_f = Matrix(hidden, input_dim);
  p.u_f = Matrix(hidden, hidden);
  p.w_c = Matrix(hidden, input_dim);
  p.u_c = Matrix(hidden, hidden);
  p.w_i = Matrix(hidden, input_dim);
  p.u_i = Matrix(hidden, hidden);
  p.w_o = Matrix(hidden, input_dim);
  p.u_o = Matrix(hidden, hidden);
  p.v_o = Matrix(hidden, hidden);
  p.b_f = Vector(hidden, 0.0);
  p.b_c = Vector(hidden, 0.0);
  p.b_i = Vector(hidden, 0.0);
  p.b_o = Vector(hidden, 0.0);
  return p;
}

LstmParams init_lstm(int hidden, int input_dim, Rng& rng) {
  LstmParams p = make_lstm(hidden, input_dim);
  p.w_f = xavier_uniform(hidden, input_dim, rng);
  p.u_f = xavier_uniform(hidden, hidden, rng);
  p.w_c = xavier_uniform(hidden, input_dim, rng);
  p.u_c = xavier_uniform(hidden, hidden, rng);
  p.w_i = xavier_uniform(hidden, input_dim, rng);
  p.u_i = xavier_uniform(hidden, hidden, rng);
  p.w_o = xavier_uniform(hidden, input_dim, rng);
  p.u_o = xavier_uniform(hidden, hidden, rng);
  p.v_o = xavier_uniform(hidden, hidden, rng);
  return p;
}

LstmState zero_state(int hidden) {
  if (hidden < 1) throw std::invalid_argument("zero_state: hidden must be positive");
  return {Vector(hidden, 0.0), Vector(hidden, 0.0)};
}

LstmStepResult lstm_step(const LstmParams& p, const Vector& x, const LstmState& prev) {
  LstmStepCache cache;
  return lstm_step_cached(p, x, prev, cache);
}

ClassifierHead make_head(int hidden, int input_dim, int classes) {
  if (hidden < 1 || input_dim < 1 || classes < 2)
    throw std::invalid_argument("make_head: bad dims (need classes >= 2)");
  ClassifierHead h;
  h.w1 = Matrix(hidden, input_dim);
  h.b1 = Vector(hidden, 0.0);
  h.w2 = Matrix(classes, hidden);
  h.b2 = Vector(classes, 0.0);
  return h;
}

ClassifierHead init_head(int hidden, int input_dim, int classes, Rng& rng) {
  ClassifierHead h = make_head(hidden, input_dim, classes);
  h.w1 = xavier_uniform(hidden, input_dim, rng);
  h.w2 = xavier_uniform(classes, hidden, rng);
  return h;
}

Vector head_scores(const ClassifierHead& head, const Vector& input) {
  HeadCache cache;
  return head_forward_cached(head, input, cache);
}

TemporalConvParams make_temporal_conv(int k, int channels) {
  if (k < 1 || channels < 1)
    throw std::invalid_argument("make_temporal_conv: dims must be positive");
  TemporalConvParams p;
  p.kernel = Matrix(k, channels);
  return p;
}

TemporalConvParams init_temporal_conv(int k, int channels, Rng& rng) {
  TemporalConvParams p = make_temporal_conv(k, channels);
  p.kernel = xavier_uniform(k, channels, rng);
  return p;
}

Vector temporal_collapse(const TemporalConvParams& conv, const std::vector<Vector>& stack) {
  if (static_cast<int>(stack.size()) != conv.k())
    throw std::invalid_argument("temporal_collapse: stack length " +
                                std::to_string(stack.size()) + " != kernel length " +
                                std::to_string(conv.k()));
  Vector out(conv.channels(), 0.0);
  for (int t = 0; t < conv.k(); ++t) {
    if (static_cast<int>(stack[t].size()) != conv.channels())
      throw std::invalid_argument("temporal_collapse: channel mismatch at step " +
                                  std::to_string(t));
    for (int c = 0; c < conv.channels(); ++c) out[c] += conv.kernel(t, c) * stack[t][c];
  }
  return out;
}

Vector structural_forward(const LstmParams& lstm, const ClassifierHead& head,
                          const ContextSequence& seq) {
  validate_context_sequence(seq);
  LstmState state = zero_state(lstm.hidden());
  Vector mean(head.classes(), 0.0);
  for (int t = 0; t < kContextSteps; ++t) {
    LstmStepResult step = lstm_step(lstm, seq.regions[t], state);
    state = std::move(step.state);
    axpy(1.0, head_scores(head, step.output), mean);
  }
  for (double& v : mean) v /= kContextSteps;
  return mean;
}

Vector spatial_forward(const ClassifierHead& head, const Vector& feat) {
  return head_scores(head, feat);
}

Vector temporal_forward(const TemporalConvParams& conv, const ClassifierHead& head,
                        const std::vector<Vector>& stack) {
  return head_scores(head, temporal_collapse(conv, stack));
}

SpatialModel SpatialModel::zeros_like() const {
  SpatialModel z;
  z.head = make_head(head.hidden(), head.input_dim(), head.classes());
  return z;
}

double SpatialModel::loss_and_grad(const Example& ex, SpatialModel& grads) const {
  check_label(ex.label, classes(), "spatial loss");
  HeadCache cache;
  const Vector y = head_forward_cached(head, ex.input, cache);
  const double p = clamp_prob(y[ex.label - 1]);
  Vector dy(y.size(), 0.0);
  dy[ex.label - 1] = -1.0 / p;
  head_backward(head, cache, dy, grads.head);
  return -std::log(p);
}

std::vector<double*> SpatialModel::param_ptrs() {
  std::vector<double*> out;
  append_ptrs(head.w1, out);
  append_ptrs(head.b1, out);
  append_ptrs(head.w2, out);
  append_ptrs(head.b2, out);
  return out;
}

TemporalModel TemporalModel::zeros_like() const {
  TemporalModel z;
  z.conv = make_temporal_conv(conv.k(), conv.channels());
  z.head = make_head(head.hidden(), head.input_dim(), head.classes());
  return z;
}

double TemporalModel::loss_and_grad(const Example& ex, TemporalModel& grads) const {
  check_label(ex.label, classes(), "temporal loss");
  const Vector collapsed = temporal_collapse(conv, ex.stack);
  HeadCache cache;
  const Vector y = head_forward_cached(head, collapsed, cache);
  const double p = clamp_prob(y[ex.label - 1]);
  Vector dy(y.size(), 0.0);
  dy[ex.label - 1] = -1.0 / p;
  const Vector dcollapsed = head_backward(head, cache, dy, grads.head);
  for (int t = 0; t < conv.k(); ++t)
    for (int c = 0; c < conv.channels(); ++c)
      grads.conv.kernel(t, c) += dcollapsed[c] * ex.stack[t][c];
  return -std::log(p);
}

std::vector<double*> TemporalModel::param_ptrs() {
  std::vector<double*> out;
  append_ptrs(conv.kernel, out);
  append_ptrs(head.w1, out);
  append_ptrs(head.b1, out);
  append_ptrs(head.w2, out);
  append_ptrs(head.b2, out);
  return out;
}

StructuralModel StructuralModel::zeros_like() const {
  StructuralModel z;
  z.lstm = make_lstm(lstm.hidden(), lstm.input_dim());
  z.head = make_head(head.hidden(), head.input_dim(), head.classes());
  return z;
}

// Cross-entropy of the step-averaged scores, then full backprop through
// time. The head consumes o_t, so gradient enters each step both through
// the head and through h_t's role in later steps.
double StructuralModel::loss_and_grad(const Example& ex, StructuralModel& grads) const {
  check_label(ex.label, classes(), "structural loss");
  validate_context_sequence(ex.seq);

  std::array<LstmStepCache, kContextSteps> caches;
  std::array<HeadCache, kContextSteps> head_caches;
  LstmState state = zero_state(lstm.hidden());
  Vector mean(head.classes(), 0.0);
  for (int t = 0; t < kContextSteps; ++t) {
    LstmStepResult step = lstm_step_cached(lstm, ex.seq.regions[t], state, caches[t]);
    state = std::move(step.state);
    axpy(1.0, head_forward_cached(head, step.output, head_caches[t]), mean);
  }
  for (double& v : mean) v /= kContextSteps;

  const double p = clamp_prob(mean[ex.label - 1]);
  // d(loss)/dy_t is the same for every step: the average spreads it 1/7.
  Vector dy(mean.size(), 0.0);
  dy[ex.label - 1] = -1.0 / (p * kContextSteps);

  std::array<Vector, kContextSteps> do_ext;
  for (int t = 0; t < kContextSteps; ++t)
    do_ext[t] = head_backward(head, head_caches[t], dy, grads.head);

  Vector dh(lstm.hidden(), 0.0), dc(lstm.hidden(), 0.0);
  for (int t = kContextSteps - 1; t >= 0; --t)
    lstm_step_backward(lstm, caches[t], do_ext[t], dh, dc, grads.lstm);

  return -std::log(p);
}

std::vector<double*> StructuralModel::param_ptrs() {
  std::vector<double*> out;
  append_ptrs(lstm.w_f, out);
  append_ptrs(lstm.u_f, out);
  append_ptrs(lstm.b_f, out);
  append_ptrs(lstm.w_c, out);
  append_ptrs(lstm.u_c, out);
  append_ptrs(lstm.b_c, out);
  append_ptrs(lstm.w_i, out);
  append_ptrs(lstm.u_i, out);
  append_ptrs(lstm.b_i, out);
  append_ptrs(lstm.w_o, out);
  append_ptrs(lstm.u_o, out);
  append_ptrs(lstm.v_o, out);
  append_ptrs(lstm.b_o, out);
  append_ptrs(head.w1, out);
  append_ptrs(head.b1, out);
  append_ptrs(head.w2, out);
  append_ptrs(head.b2, out);
  return out;
}

}  // namespace ip
