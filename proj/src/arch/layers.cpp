#include "msfa/arch/layers.hpp"

#include <cmath>

namespace msfa::arch {

namespace {

std::string layer(const std::string& prefix, std::size_t i) { return prefix + "/l" + std::to_string(i); }

}  // namespace

void init_linear(ParamSet& params, Rng& rng, const std::string& prefix, std::size_t in, std::size_t out, bool bias) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Array w(Shape{in, out});
  for (Real& v : w.data()) v = static_cast<Real>(rng.uniform(-limit, limit));
  params.add(prefix + "/w", std::move(w));
  if (bias) params.add(prefix + "/b", Array(Shape{out}));
}

void init_mlp(ParamSet& params, Rng& rng, const std::string& prefix, std::size_t in,
              const std::vector<std::size_t>& hidden, std::size_t out) {
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    init_linear(params, rng, layer(prefix, i), width, hidden[i]);
    width = hidden[i];
  }
  init_linear(params, rng, layer(prefix, hidden.size()), width, out);
}

Var mlp(const Bindings& b, const std::string& prefix, const Var& x, std::size_t layers) {
  Var h = x;
  for (std::size_t i = 0; i < layers; ++i) {
    h = linear(h, b[layer(prefix, i) + "/w"], b[layer(prefix, i) + "/b"]);
    if (i + 1 < layers) h = relu(h);
  }
  return h;
}

Var relu_mlp(const Bindings& b, const std::string& prefix, const Var& x, std::size_t layers) {
  Var h = x;
  for (std::size_t i = 0; i < layers; ++i) h = relu(linear(h, b[layer(prefix, i) + "/w"], b[layer(prefix, i) + "/b"]));
  return h;
}

void init_gru(ParamSet& params, Rng& rng, const std::string& prefix, std::size_t in, std::size_t hidden) {
  init_linear(params, rng, prefix + "/x", in, 3 * hidden, false);
  init_linear(params, rng, prefix + "/h", hidden, 3 * hidden, false);
  params.add(prefix + "/bx", Array(Shape{3 * hidden}));
  params.add(prefix + "/bh", Array(Shape{3 * hidden}));
}

Var gru_step(const Bindings& b, const std::string& prefix, const Var& x, const Var& h) {
  const std::size_t m = h.dim(1);
  const Var gx = linear(x, b[prefix + "/x/w"], b[prefix + "/bx"]);
  const Var gh = linear(h, b[prefix + "/h/w"], b[prefix + "/bh"]);
  const Var r = sigmoid(slice(gx, 1, 0, m) + slice(gh, 1, 0, m));
  const Var z = sigmoid(slice(gx, 1, m, 2 * m) + slice(gh, 1, m, 2 * m));
  const Var n = tanh(slice(gx, 1, 2 * m, 3 * m) + r * slice(gh, 1, 2 * m, 3 * m));
  // h' = n + z ⊙ (h - n)
  return n + z * (h - n);
}

void init_lstm(ParamSet& params, Rng& rng, const std::string& prefix, std::size_t in, std::size_t hidden) {
  init_linear(params, rng, prefix + "/x", in, 4 * hidden, false);
  init_linear(params, rng, prefix + "/h", hidden, 4 * hidden, false);
  Array bias(Shape{4 * hidden});
  for (std::size_t i = hidden; i < 2 * hidden; ++i) bias[i] = 1;
  params.add(prefix + "/b", std::move(bias));
}

LstmOutput lstm_step(const Bindings& b, const std::string& prefix, const Var& x, const Var& h, const Var& c) {
  const std::size_t m = h.dim(1);
  const Var g = linear(x, b[prefix + "/x/w"], b[prefix + "/b"]) + matmul(h, b[prefix + "/h/w"]);
  const Var i = sigmoid(slice(g, 1, 0, m));
  const Var f = sigmoid(slice(g, 1, m, 2 * m));
  const Var cand = tanh(slice(g, 1, 2 * m, 3 * m));
  const Var o = sigmoid(slice(g, 1, 3 * m, 4 * m));
  const Var c2 = f * c + i * cand;
  return {o * tanh(c2), c2};
}

void init_attention(ParamSet& params, Rng& rng, const std::string& prefix, const AttentionSpec& s) {
  if (s.heads == 0 || s.dim % s.heads != 0) throw ConfigError("attention heads must divide the projection dim");
  init_linear(params, rng, prefix + "/query", s.module_size + s.num_actions, s.dim, false);
  init_linear(params, rng, prefix + "/key", s.module_size, s.dim, false);
  init_linear(params, rng, prefix + "/value", s.module_size, s.dim, false);
  init_linear(params, rng, prefix + "/gate1", s.dim, s.dim, false);
  init_linear(params, rng, prefix + "/gate2", s.dim, s.dim, false);
  params.add(prefix + "/gate_bias", Array(Shape{s.dim}));
}

Var tile_rows(const Var& x, std::size_t copies) {
  if (copies == 1) return x;
  const std::vector<Var> parts(copies, x);
  return concat(parts, 0);
}

Var module_rows(const Var& stacked, std::size_t k, std::size_t batch) {
  return slice(stacked, 0, k * batch, (k + 1) * batch);
}

AttentionOutput attend(const Bindings& b, const std::string& prefix, const AttentionSpec& s,
                       const std::vector<Var>& states, const Var& prev_action) {
  const std::size_t n = states.size();
  if (n != s.modules) throw DimensionError("attention expects one state per module");
  const std::size_t batch = states[0].dim(0);
  const std::size_t dh = s.dim / s.heads;

  const Var stacked = n == 1 ? states[0] : concat(states, 0);  // [n*B, m]
  const std::vector<Var> qin{stacked, tile_rows(prev_action, n)};
  const Var q = matmul(concat(qin, 1), b[prefix + "/query/w"]);
  Var k = matmul(stacked, b[prefix + "/key/w"]);
  Var v = matmul(stacked, b[prefix + "/value/w"]);
  std::size_t rows = n;
  if (s.zero_key) {
    const Var zero = Var::constant(Array(Shape{batch, s.dim}));
    const std::vector<Var> kz{k, zero}, vz{v, zero};
    k = concat(kz, 0);
    v = concat(vz, 0);
    rows = n + 1;
  }
  const Var scores = scale(sum(reshape(q, {n, 1, batch, s.heads, dh}) * reshape(k, {1, rows, batch, s.heads, dh}), 4),
                           Real(1) / static_cast<Real>(s.dim));
  const Var weights = softmax(scores, 1);  // [n, R, B, heads]
  const Var mixed = sum(reshape(weights, {n, rows, batch, s.heads, 1}) * reshape(v, {1, rows, batch, s.heads, dh}), 1);
  return {q, reshape(mixed, {n * batch, s.dim}), weights};
}

Var sigtanh_gate(const Bindings& b, const std::string& prefix, const Var& q, const Var& v) {
  const Var open = tanh(matmul(v, b[prefix + "/gate1/w"]));
  const Var gate = sigmoid(matmul(v, b[prefix + "/gate2/w"]) - b[prefix + "/gate_bias"]);
  return q + open * gate;
}

}  // namespace msfa::arch
