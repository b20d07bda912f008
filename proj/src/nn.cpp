#include "indcomm/nn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace indcomm::nn {

namespace {

void require_positive(std::size_t v, const char* what) {
  if (v == 0) throw std::invalid_argument(std::string(what) + " must be positive");
}

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(rows * cols);
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor(std::move(values), {rows, cols}, true);
}

Tensor frozen(const Tensor& t) { return t.clone(false); }

void check_width(const Tensor& x, std::size_t width, const char* what) {
  if (x.rank() != 2 || x.dim(1) != width) {
    throw ad::ShapeError(std::string(what) + ": expected [rows x " + std::to_string(width) + "], got " +
                         ad::to_string(x.shape()));
  }
}

}  // namespace

std::vector<Tensor> tensors_of(const ParameterList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

double grad_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void zero_grads(const ParameterList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

// ---------------------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  require_positive(in, "linear input width");
  require_positive(out, "linear output width");
  weight_ = uniform_matrix(out, in, in, rng);
  bias_ = Tensor::zeros({out}, true);
}

Tensor Linear::forward(Tape& tape, const Tensor& x) const {
  check_width(x, in_features(), "linear");
  return tape.add(tape.matmul_bt(x, weight_), bias_);
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

Linear Linear::frozen_copy() const {
  Linear copy;
  copy.weight_ = frozen(weight_);
  copy.bias_ = frozen(bias_);
  return copy;
}

// ---------------------------------------------------------------------------

GruCell::GruCell(std::size_t in, std::size_t hidden, Rng& rng) {
  require_positive(in, "GRU input width");
  require_positive(hidden, "GRU hidden width");
  w_z_ = uniform_matrix(hidden, in, in, rng);
  u_z_ = uniform_matrix(hidden, hidden, hidden, rng);
  b_z_ = Tensor::zeros({hidden}, true);
  w_r_ = uniform_matrix(hidden, in, in, rng);
  u_r_ = uniform_matrix(hidden, hidden, hidden, rng);
  b_r_ = Tensor::zeros({hidden}, true);
  w_h_ = uniform_matrix(hidden, in, in, rng);
  u_h_ = uniform_matrix(hidden, hidden, hidden, rng);
  b_h_ = Tensor::zeros({hidden}, true);
}

Tensor GruCell::combine(Tape& tape, const Tensor& xz, const Tensor& xr, const Tensor& xh,
                        const Tensor& h) const {
  const Tensor z = tape.sigmoid(tape.add(xz, tape.matmul_bt(h, u_z_)));
  const Tensor r = tape.sigmoid(tape.add(xr, tape.matmul_bt(h, u_r_)));
  const Tensor c = tape.tanh(tape.add(xh, tape.matmul_bt(tape.mul(r, h), u_h_)));
  // (1 - z) * h + z * c, written as h + z * (c - h)
  return tape.add(h, tape.mul(z, tape.sub(c, h)));
}

Tensor GruCell::step(Tape& tape, const Tensor& x, const Tensor& h) const {
  check_width(x, input_size(), "gru_step input");
  check_width(h, hidden_size(), "gru_step hidden");
  if (x.dim(0) != h.dim(0)) {
    throw ad::ShapeError("gru_step: " + ad::to_string(x.shape()) + " rows vs hidden " + ad::to_string(h.shape()));
  }
  const Tensor xz = tape.add(tape.matmul_bt(x, w_z_), b_z_);
  const Tensor xr = tape.add(tape.matmul_bt(x, w_r_), b_r_);
  const Tensor xh = tape.add(tape.matmul_bt(x, w_h_), b_h_);
  return combine(tape, xz, xr, xh, h);
}

std::vector<Tensor> GruCell::unroll(Tape& tape, const Tensor& xs, std::size_t steps, const Tensor& h0) const {
  check_width(xs, input_size(), "gru_unroll input");
  check_width(h0, hidden_size(), "gru_unroll hidden");
  const std::size_t rows = h0.dim(0);
  if (xs.dim(0) != steps * rows) {
    throw ad::ShapeError("gru_unroll: " + std::to_string(xs.dim(0)) + " input rows for " + std::to_string(steps) +
                         " steps of " + std::to_string(rows));
  }
  const Tensor xz = tape.add(tape.matmul_bt(xs, w_z_), b_z_);
  const Tensor xr = tape.add(tape.matmul_bt(xs, w_r_), b_r_);
  const Tensor xh = tape.add(tape.matmul_bt(xs, w_h_), b_h_);
  std::vector<Tensor> hs;
  hs.reserve(steps);
  Tensor h = h0;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t b = t * rows, e = b + rows;
    h = combine(tape, tape.slice(xz, b, e, 0), tape.slice(xr, b, e, 0), tape.slice(xh, b, e, 0), h);
    hs.push_back(h);
  }
  return hs;
}

void GruCell::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".w_z", w_z_});
  out.push_back({prefix + ".u_z", u_z_});
  out.push_back({prefix + ".b_z", b_z_});
  out.push_back({prefix + ".w_r", w_r_});
  out.push_back({prefix + ".u_r", u_r_});
  out.push_back({prefix + ".b_r", b_r_});
  out.push_back({prefix + ".w_h", w_h_});
  out.push_back({prefix + ".u_h", u_h_});
  out.push_back({prefix + ".b_h", b_h_});
}

GruCell GruCell::frozen_copy() const {
  GruCell c;
  c.w_z_ = frozen(w_z_);
  c.u_z_ = frozen(u_z_);
  c.b_z_ = frozen(b_z_);
  c.w_r_ = frozen(w_r_);
  c.u_r_ = frozen(u_r_);
  c.b_r_ = frozen(b_r_);
  c.w_h_ = frozen(w_h_);
  c.u_h_ = frozen(u_h_);
  c.b_h_ = frozen(b_h_);
  return c;
}

// ---------------------------------------------------------------------------

QNetwork::QNetwork(const QNetworkDims& dims, Rng& rng)
    : encoder_(dims.input, dims.hidden, rng), rnn_(dims.hidden, dims.hidden, rng), head_(dims.hidden, dims.actions, rng) {}

QNetwork::Output QNetwork::forward(Tape& tape, const Tensor& input, const Tensor& hidden) const {
  check_width(input, input_size(), "q_forward");
  const Tensor e = tape.relu(encoder_.forward(tape, input));
  Tensor h = rnn_.step(tape, e, hidden);
  Tensor q = head_.forward(tape, h);
  return {std::move(q), std::move(h)};
}

Tensor QNetwork::unroll(Tape& tape, const Tensor& inputs, std::size_t steps) const {
  check_width(inputs, input_size(), "q_unroll");
  if (steps == 0 || inputs.dim(0) % steps != 0) {
    throw ad::ShapeError("q_unroll: " + std::to_string(inputs.dim(0)) + " rows do not split into " +
                         std::to_string(steps) + " steps");
  }
  const std::size_t rows = inputs.dim(0) / steps;
  const Tensor e = tape.relu(encoder_.forward(tape, inputs));
  const std::vector<Tensor> hs = rnn_.unroll(tape, e, steps, initial_hidden(rows));
  return head_.forward(tape, tape.concat(hs, 0));
}

ParameterList QNetwork::parameters() const {
  ParameterList out;
  encoder_.collect("encoder", out);
  rnn_.collect("rnn", out);
  head_.collect("head", out);
  return out;
}

QNetwork QNetwork::frozen_copy() const {
  QNetwork q;
  q.encoder_ = encoder_.frozen_copy();
  q.rnn_ = rnn_.frozen_copy();
  q.head_ = head_.frozen_copy();
  return q;
}

// ---------------------------------------------------------------------------

CommNetwork::CommNetwork(const CommNetworkDims& dims, Rng& rng)
    : enc1_(dims.obs, dims.hidden, rng), enc2_(dims.hidden, dims.message, rng) {}

Tensor CommNetwork::forward(Tape& tape, const Tensor& obs) const {
  check_width(obs, obs_size(), "comm_forward");
  return enc2_.forward(tape, tape.relu(enc1_.forward(tape, obs)));
}

ParameterList CommNetwork::parameters() const {
  ParameterList out;
  enc1_.collect("comm.enc1", out);
  enc2_.collect("comm.enc2", out);
  return out;
}

CommNetwork CommNetwork::frozen_copy() const {
  CommNetwork c;
  c.enc1_ = enc1_.frozen_copy();
  c.enc2_ = enc2_.frozen_copy();
  return c;
}

// ---------------------------------------------------------------------------

void sync_target(const ParameterList& live, const ParameterList& target) {
  if (live.size() != target.size()) {
    throw std::invalid_argument("sync_target: " + std::to_string(live.size()) + " live vs " +
                                std::to_string(target.size()) + " target parameters");
  }
  for (std::size_t i = 0; i < live.size(); ++i) {
    if (live[i].name != target[i].name || live[i].tensor.shape() != target[i].tensor.shape()) {
      throw std::invalid_argument("sync_target: architecture mismatch at " + live[i].name + " " +
                                  ad::to_string(live[i].tensor.shape()) + " vs " + target[i].name + " " +
                                  ad::to_string(target[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < live.size(); ++i) {
    Tensor dst = target[i].tensor;
    const auto src = live[i].tensor.values();
    std::copy(src.begin(), src.end(), dst.mutable_values().begin());
  }
}

void rmsprop_update(std::span<double> param, std::span<const double> grad, std::span<double> square_avg,
                    const RmsPropOptions& options) {
  if (param.size() != square_avg.size() || (!grad.empty() && grad.size() != param.size())) {
    throw std::invalid_argument("rmsprop_update: parameter of size " + std::to_string(param.size()) +
                                " with gradient of size " + std::to_string(grad.size()) + " and state of size " +
                                std::to_string(square_avg.size()));
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    square_avg[i] = options.rho * square_avg[i] + (1.0 - options.rho) * g * g;
    param[i] -= options.lr * g / (std::sqrt(square_avg[i]) + options.eps);
  }
}

RmsProp::RmsProp(std::vector<Tensor> params, const RmsPropOptions& options)
    : params_(std::move(params)), updates_(params_.size(), 0), options_(options) {
  square_avg_.reserve(params_.size());
  for (const auto& p : params_) square_avg_.emplace_back(p.numel(), 0.0);
}

void RmsProp::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    rmsprop_update(params_[i].mutable_values(), params_[i].grad(), square_avg_[i], options_);
    ++updates_[i];
  }
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      Tensor t = p.tensor;
      for (double& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------

namespace {
constexpr const char* kCheckpointMagic = "indcomm-params";
constexpr int kCheckpointVersion = 1;

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}
}  // namespace

void write_parameters(std::ostream& os, const ParameterList& params) {
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << params.size() << '\n';
  for (const auto& p : params) {
    const auto& shape = p.tensor.shape();
    os << p.name << ' ' << shape.size();
    for (auto d : shape) os << ' ' << d;
    os << '\n';
    const auto vals = p.tensor.values();
    for (std::size_t i = 0; i < vals.size(); ++i) os << (i ? " " : "") << hexfloat(vals[i]);
    os << '\n';
  }
}

ParameterList read_parameters(std::istream& is) {
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(is >> magic >> version >> count) || magic != kCheckpointMagic || version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: bad header");
  }
  ParameterList out;
  for (std::size_t k = 0; k < count; ++k) {
    NamedParameter p;
    std::size_t rank = 0;
    if (!(is >> p.name >> rank)) throw std::runtime_error("checkpoint: truncated entry header");
    ad::Shape shape(rank);
    for (auto& d : shape) {
      if (!(is >> d)) throw std::runtime_error("checkpoint: truncated shape for " + p.name);
    }
    std::vector<double> values(ad::numel(shape));
    for (auto& v : values) {
      std::string token;
      if (!(is >> token)) throw std::runtime_error("checkpoint: truncated values for " + p.name);
      v = std::strtod(token.c_str(), nullptr);
    }
    p.tensor = Tensor(std::move(values), std::move(shape), false);
    out.push_back(std::move(p));
  }
  return out;
}

void load_parameters(std::istream& is, const ParameterList& params) {
  const ParameterList stored = read_parameters(is);
  sync_target(stored, params);
}

void save_parameters(const std::string& path, const ParameterList& params) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_parameters(os, params);
  if (!os) throw std::runtime_error("failed writing " + path);
}

void load_parameters(const std::string& path, const ParameterList& params) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  load_parameters(is, params);
}

}  // namespace indcomm::nn
