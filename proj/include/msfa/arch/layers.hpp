#pragma once

#include <string>
#include <vector>

#include "msfa/numcore/params.hpp"
#include "msfa/numcore/rng.hpp"

namespace msfa::arch {

/// Glorot-uniform weight "<prefix>/w" of shape [in, out] and, if requested,
/// a zero bias "<prefix>/b".
void init_linear(ParamSet& params, Rng& rng, const std::string& prefix, std::size_t in, std::size_t out,
                 bool bias = true);

/// ReLU MLP with linear output. Layers are "<prefix>/l0", "<prefix>/l1", ...
void init_mlp(ParamSet& params, Rng& rng, const std::string& prefix, std::size_t in,
              const std::vector<std::size_t>& hidden, std::size_t out);
Var mlp(const Bindings& b, const std::string& prefix, const Var& x, std::size_t layers);

/// MLP whose every layer, including the last, is followed by ReLU.
Var relu_mlp(const Bindings& b, const std::string& prefix, const Var& x, std::size_t layers);

/// GRU cell with fused gate matrices: "<prefix>/wx" [in, 3m], "<prefix>/wh"
/// [m, 3m], "<prefix>/bx", "<prefix>/bh" [3m]. Gate order (reset, update,
/// candidate); the reset gate scales the recurrent candidate term.
void init_gru(ParamSet& params, Rng& rng, const std::string& prefix, std::size_t in, std::size_t hidden);
Var gru_step(const Bindings& b, const std::string& prefix, const Var& x, const Var& h);

/// LSTM cell with fused gates (input, forget, candidate, output) and forget
/// bias initialised to 1.
void init_lstm(ParamSet& params, Rng& rng, const std::string& prefix, std::size_t in, std::size_t hidden);
struct LstmOutput {
  Var h;
  Var c;
};
LstmOutput lstm_step(const Bindings& b, const std::string& prefix, const Var& x, const Var& h, const Var& c);

/// Shared inter-module attention. Query, key and value projections have no
/// bias so the appended zero row yields a zero key and a zero value.
struct AttentionSpec {
  std::size_t modules = 1;
  std::size_t module_size = 1;
  std::size_t num_actions = 1;
  std::size_t dim = 16;  // d_q, split evenly across heads
  std::size_t heads = 1;
  bool zero_key = true;
};

struct AttentionOutput {
  Var queries;   // [n*B, d_q], module-major rows
  Var messages;  // [n*B, d_q]
  Var weights;   // [n, R, B, heads], R = n (+1 with the zero row); sums to 1 over axis 1
};

void init_attention(ParamSet& params, Rng& rng, const std::string& prefix, const AttentionSpec& spec);

/// q_k = W^query [s_k, a_prev]; K, V = W^key S, W^value S with an optional
/// zero row; per head, v_k = softmax(q_k Kᵀ / d_q) V. Heads are concatenated.
AttentionOutput attend(const Bindings& b, const std::string& prefix, const AttentionSpec& spec,
                       const std::vector<Var>& states, const Var& prev_action);

/// u = q + tanh(v W^g1) ⊙ σ(v W^g2 - b_g).
Var sigtanh_gate(const Bindings& b, const std::string& prefix, const Var& q, const Var& v);

/// n copies of x stacked along axis 0.
Var tile_rows(const Var& x, std::size_t copies);

/// Rows [k*B, (k+1)*B) of a module-major stack.
Var module_rows(const Var& stacked, std::size_t k, std::size_t batch);

}  // namespace msfa::arch
