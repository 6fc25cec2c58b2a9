#pragma once

#include <random>
#include <string>

#include "gcvrnn/autodiff.hpp"

namespace gcvrnn {

/// y = x W (+ b). W is in x out.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, bool with_bias,
                       std::mt19937_64& rng) {
    Linear l;
    l.weight = &store.add(name + ".W", glorot_uniform(in, out, rng));
    if (with_bias) l.bias = &store.add(name + ".b", Tensor({1, out}));
    return l;
  }

  std::size_t in() const { return weight->value.rows(); }
  std::size_t out() const { return weight->value.cols(); }

  Var operator()(Tape& tape, const Var& x) const {
    Var y = matmul(x, tape.parameter(*weight));
    if (bias) y = add_row(y, tape.parameter(*bias));
    return y;
  }
};

/// Two affine layers with a ReLU in between; linear output.
struct Mlp2 {
  Linear first;
  Linear second;

  static Mlp2 create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                     std::size_t out, std::mt19937_64& rng) {
    return Mlp2{Linear::create(store, name + ".l0", in, hidden, true, rng),
                Linear::create(store, name + ".l1", hidden, out, true, rng)};
  }

  Var operator()(Tape& tape, const Var& x) const { return second(tape, relu(first(tape, x))); }
};

/// GRU cell:
///   r = sig(x Wr + h Ur + b_r), u = sig(x Wu + h Uu + b_u)
///   n = tanh(x Wn + b_n + r * (h Un + c_n)),  h' = (1 - u) * n + u * h
/// The three gates share one input and one hidden projection (columns r|u|n).
struct GruCell {
  Linear input;   // in -> 3H
  Linear hidden;  // H -> 3H

  static GruCell create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t h,
                        std::mt19937_64& rng) {
    return GruCell{Linear::create(store, name + ".Wx", in, 3 * h, true, rng),
                   Linear::create(store, name + ".Wh", h, 3 * h, true, rng)};
  }

  std::size_t hidden_size() const { return hidden.in(); }

  Var operator()(Tape& tape, const Var& x, const Var& h) const {
    const std::size_t H = hidden_size();
    Var gx = input(tape, x);
    Var gh = hidden(tape, h);
    Var r = sigmoid(add(slice_cols(gx, 0, H), slice_cols(gh, 0, H)));
    Var u = sigmoid(add(slice_cols(gx, H, 2 * H), slice_cols(gh, H, 2 * H)));
    Var n = tanh(add(slice_cols(gx, 2 * H, 3 * H), mul(r, slice_cols(gh, 2 * H, 3 * H))));
    // (1 - u) * n + u * h == n + u * (h - n)
    return add(n, mul(u, sub(h, n)));
  }
};

}  // namespace gcvrnn
