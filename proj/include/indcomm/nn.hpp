#pragma once

// Network building blocks on top of the autodiff tape: linear layers, a GRU
// cell, the recurrent Q-network, the message encoder, RMSprop and hard
// target synchronisation.
//
// Activations are row-major [rows x features] matrices. Sequences are laid
// out time-major: row t * R + r holds sample r at step t.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "indcomm/autodiff.hpp"
#include "indcomm/rng.hpp"

namespace indcomm::nn {

using ad::Tape;
using ad::Tensor;

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

/// Handles of every tensor in `params`, in order.
std::vector<Tensor> tensors_of(const ParameterList& params);
std::size_t parameter_count(const ParameterList& params);
/// Euclidean norm of the accumulated gradients; missing gradients count as zero.
double grad_norm(const ParameterList& params);
void zero_grads(const ParameterList& params);

class Linear {
 public:
  Linear() = default;
  /// Weight uniform in [-1/sqrt(in), 1/sqrt(in)], bias zero.
  Linear(std::size_t in, std::size_t out, Rng& rng);

  /// [rows x in] -> [rows x out]
  Tensor forward(Tape& tape, const Tensor& x) const;

  std::size_t in_features() const { return weight_.dim(1); }
  std::size_t out_features() const { return weight_.dim(0); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

  void collect(const std::string& prefix, ParameterList& out) const;
  Linear frozen_copy() const;

 private:
  Tensor weight_;  // [out x in]
  Tensor bias_;    // [out]
};

/// z = sigmoid(Wz x + Uz h + bz)
/// r = sigmoid(Wr x + Ur h + br)
/// c = tanh(Wh x + Uh (r * h) + bh)
/// h' = (1 - z) * h + z * c
class GruCell {
 public:
  GruCell() = default;
  GruCell(std::size_t in, std::size_t hidden, Rng& rng);

  std::size_t input_size() const { return w_z_.dim(1); }
  std::size_t hidden_size() const { return w_z_.dim(0); }

  /// x [R x in], h [R x hidden] -> h' [R x hidden]
  Tensor step(Tape& tape, const Tensor& x, const Tensor& h) const;

  /// Runs `steps` consecutive steps over time-major inputs [steps*R x in],
  /// starting from h0 [R x hidden]. Input projections are computed once for
  /// the whole sequence; the result is bit-identical to repeated step().
  std::vector<Tensor> unroll(Tape& tape, const Tensor& xs, std::size_t steps, const Tensor& h0) const;

  void collect(const std::string& prefix, ParameterList& out) const;
  GruCell frozen_copy() const;

  // Gate parameters, exposed for tests.
  Tensor w_z_, u_z_, b_z_;
  Tensor w_r_, u_r_, b_r_;
  Tensor w_h_, u_h_, b_h_;

 private:
  Tensor combine(Tape& tape, const Tensor& xz, const Tensor& xr, const Tensor& xh, const Tensor& h) const;
};

struct QNetworkDims {
  std::size_t input = 0;
  std::size_t hidden = 64;
  std::size_t actions = 0;
};

/// Recurrent Q-network: relu(encoder(input)) -> GRU -> linear head.
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(const QNetworkDims& dims, Rng& rng);

  struct Output {
    Tensor q;       // [R x actions]
    Tensor hidden;  // [R x hidden]
  };

  /// One step for R rows.
  Output forward(Tape& tape, const Tensor& input, const Tensor& hidden) const;
  /// Q-values for a whole time-major sequence [steps*R x input] from a zero
  /// hidden state; returns [steps*R x actions].
  Tensor unroll(Tape& tape, const Tensor& inputs, std::size_t steps) const;

  Tensor initial_hidden(std::size_t rows) const { return Tensor::zeros({rows, hidden_size()}); }

  std::size_t input_size() const { return encoder_.in_features(); }
  std::size_t hidden_size() const { return encoder_.out_features(); }
  std::size_t num_actions() const { return head_.out_features(); }

  ParameterList parameters() const;
  QNetwork frozen_copy() const;

  const Linear& encoder() const { return encoder_; }
  const GruCell& rnn() const { return rnn_; }
  const Linear& head() const { return head_; }

 private:
  Linear encoder_;
  GruCell rnn_;
  Linear head_;
};

struct CommNetworkDims {
  std::size_t obs = 0;
  std::size_t hidden = 64;
  std::size_t message = 64;
};

/// Message encoder: linear(relu(linear(obs))). No output nonlinearity.
class CommNetwork {
 public:
  CommNetwork() = default;
  CommNetwork(const CommNetworkDims& dims, Rng& rng);

  /// [R x obs] -> [R x message]
  Tensor forward(Tape& tape, const Tensor& obs) const;

  std::size_t obs_size() const { return enc1_.in_features(); }
  std::size_t message_size() const { return enc2_.out_features(); }

  ParameterList parameters() const;
  CommNetwork frozen_copy() const;

 private:
  Linear enc1_;
  Linear enc2_;
};

/// Hard copy of every live parameter value into the target. Throws when the
/// two lists differ in names or shapes.
void sync_target(const ParameterList& live, const ParameterList& target);

struct RmsPropOptions {
  double lr = 5e-4;
  double rho = 0.99;
  double eps = 1e-5;
};

/// v <- rho * v + (1 - rho) * g^2;  p <- p - lr * g / (sqrt(v) + eps)
void rmsprop_update(std::span<double> param, std::span<const double> grad, std::span<double> square_avg,
                    const RmsPropOptions& options);

class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(std::vector<Tensor> params, const RmsPropOptions& options);

  /// Applies one update to every parameter from its accumulated gradient
  /// (a missing gradient is treated as zero).
  void step();

  std::size_t size() const { return params_.size(); }
  const std::vector<double>& square_avg(std::size_t i) const { return square_avg_.at(i); }
  /// Number of updates parameter i has received.
  std::size_t update_count(std::size_t i) const { return updates_.at(i); }
  const RmsPropOptions& options() const { return options_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> square_avg_;
  std::vector<std::size_t> updates_;
  RmsPropOptions options_;
};

/// Rescales gradients so their joint norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

// Checkpoints: a text listing of (name, shape, row-major values) per
// parameter, values written as hexadecimal floats so the round trip is exact.
void write_parameters(std::ostream& os, const ParameterList& params);
ParameterList read_parameters(std::istream& is);
/// Copies values from a checkpoint into `params`, matching by name and shape.
void load_parameters(std::istream& is, const ParameterList& params);
void save_parameters(const std::string& path, const ParameterList& params);
void load_parameters(const std::string& path, const ParameterList& params);

}  // namespace indcomm::nn
