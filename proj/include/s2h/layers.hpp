#pragma once

// Differentiable primitives recorded on a Tape.

#include <span>
#include <vector>

#include "s2h/autodiff.hpp"

namespace s2h {

enum class Activation { Linear, Relu };
enum class Direction { Forward, Backward };

struct GruWeights {
  Var wx;    // [C,3H]
  Var uh;    // [H,3H]
  Var bias;  // [3H]
};

/// Same-padded 1D convolution. input [B,T,C], kernels [K,C,F] with K odd, bias [F] -> [B,T,F].
Var conv1d(Tape& tape, Var input, Var kernels, Var bias);

/// One GRU direction over [B,T,C] -> [B,T,H], zero initial state.
Var gru_layer(Tape& tape, Var input, const GruWeights& w, Direction dir);

/// Forward and backward GRUs concatenated as [forward | backward] -> [B,T,2H].
Var bidirectional_gru(Tape& tape, Var input, const GruWeights& fwd, const GruWeights& bwd);

/// act(input[B,C] * W[C,D] + b[D]).
Var dense(Tape& tape, Var input, Var weight, Var bias, Activation act);

Var relu(Tape& tape, Var input);

/// [B,T,C] -> [B,C], average over time.
Var mean_pool_time(Tape& tape, Var input);

/// Concatenate rank-2 or rank-3 tensors along the last axis.
Var concat_last(Tape& tape, std::span<const Var> parts);

/// Columns [begin,end) of a [B,D] tensor.
Var slice_columns(Tape& tape, Var input, std::size_t begin, std::size_t end);

/// [B,L,C] -> [B,L*factor,C], each step repeated `factor` times.
Var upsample_time(Tape& tape, Var input, std::size_t factor);

Var reshape(Tape& tape, Var input, Shape shape);

/// Sum of all elements -> [1].
Var sum(Tape& tape, Var input);

Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double s);

}  // namespace s2h
