#pragma once

// Noise-prediction models: the interface, two scripted stand-ins and a small
// trainable perceptron over the flattened token sequence.

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "xmopkit/common.hpp"
#include "xmopkit/diffusion.hpp"
#include "xmopkit/tokens.hpp"

namespace xmopkit {

/// One noised training example. `clean` is kept for oracle checks.
struct DenoisingSample {
  VectorXd noisy;
  VectorXd eps;
  VectorXd clean;
  PolicyCondition condition;
  int tau = 1;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  /// Predicted noise, same shape as `noisy`.
  virtual VectorXd predict(const VectorXd& noisy, const PolicyCondition& c, int tau) const = 0;
  /// Mean masked loss over the batch; trainable models also take one
  /// gradient step of size `lr`.
  virtual double train_on(const std::vector<DenoisingSample>& batch, double lr);
};

/// Squared error averaged over entries of available slots only.
inline double masked_mse(const VectorXd& pred, const VectorXd& eps, const std::vector<bool>& available) {
  const int slots = static_cast<int>(available.size());
  const int horizon = static_cast<int>(eps.size() / (slots * kTokenWidth));
  const VectorXd w = query_weights(available, horizon);
  return (w.array() * (pred - eps).array().square()).sum() / w.sum();
}

inline double denoising_loss(const Denoiser& d, const DenoisingSample& s) {
  return masked_mse(d.predict(s.noisy, s.condition, s.tau), s.eps, s.condition.available);
}

inline double Denoiser::train_on(const std::vector<DenoisingSample>& batch, double) {
  if (batch.empty()) throw InvalidArgument("train_on: empty batch");
  double sum = 0.0;
  for (const auto& s : batch) sum += denoising_loss(*this, s);
  return sum / static_cast<double>(batch.size());
}

class ZeroDenoiser : public Denoiser {
 public:
  VectorXd predict(const VectorXd& noisy, const PolicyCondition&, int) const override {
    return VectorXd::Zero(noisy.size());
  }
};

/// Always predicts the noise that leads back to a fixed clean sample, so
/// DDIM lands on `clean` exactly. Used as a test oracle and by the
/// scripted expert.
class ScriptedDenoiser : public Denoiser {
 public:
  ScriptedDenoiser(DiffusionSchedule schedule, VectorXd clean) : sc_(std::move(schedule)), clean_(std::move(clean)) {}
  VectorXd predict(const VectorXd& noisy, const PolicyCondition&, int tau) const override {
    if (noisy.size() != clean_.size()) throw InvalidArgument("ScriptedDenoiser: query size mismatch");
    return implied_noise(sc_, noisy, clean_, tau);
  }

 private:
  DiffusionSchedule sc_;
  VectorXd clean_;
};

// ---------------------------------------------------------------------------
// TinyDenoiser
//
// Each token t becomes z = W_t t + b_t plus position embeddings (fixed
// sinusoidal link embedding, learned horizon embedding for queries, learned
// input embedding for observation/goal). Tokens of missing links are zero.
// The flattened z and a sinusoidal step embedding feed a tanh MLP with two
// hidden layers; the output adds a learned per-step gain times the noisy
// queries.

struct TinyDenoiserDims {
  int slots = kTokenSlots;
  int horizon = kHorizon;
  int embed = 16;
  int hidden = 256;
  int train_steps = 100;

  int tokens() const { return sequence_length(slots, horizon); }
  int input() const { return tokens() * embed + embed; }
  int queries() const { return horizon * slots * kTokenWidth; }

  nlohmann::json to_json() const {
    return {{"slots", slots}, {"horizon", horizon}, {"embed", embed}, {"hidden", hidden}, {"train_steps", train_steps}};
  }
  static TinyDenoiserDims from_json(const nlohmann::json& j) {
    TinyDenoiserDims d;
    d.slots = j.at("slots").get<int>();
    d.horizon = j.at("horizon").get<int>();
    d.embed = j.at("embed").get<int>();
    d.hidden = j.at("hidden").get<int>();
    d.train_steps = j.at("train_steps").get<int>();
    return d;
  }
};

class TinyDenoiser : public Denoiser {
 public:
  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;

  explicit TinyDenoiser(TinyDenoiserDims dims = {}) : dims_(dims) {
    if (dims.embed < 2 || dims.embed % 2 != 0 || dims.hidden < 1) {
      throw InvalidArgument("TinyDenoiser: embed must be even and hidden positive");
    }
    layout();
    params_ = VectorXd::Zero(size_);
    lpe_ = sinusoidal_lpe(dims_.slots, dims_.embed);
    step_table_ = sinusoidal_lpe(dims_.train_steps + 1, dims_.embed);
  }

  /// Gaussian weights scaled by 1/sqrt(fan_in); position tables N(0, 0.02);
  /// biases and skip gains zero.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    auto fill = [&](MatMap m, double scale) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * nd(rng);
    };
    params_.setZero();
    fill(mat(o_wt_, dims_.embed, kTokenWidth), 1.0 / std::sqrt(static_cast<double>(kTokenWidth)));
    fill(mat(o_hpe_, dims_.horizon, dims_.embed), 0.02);
    fill(mat(o_cpe_, 2, dims_.embed), 0.02);
    fill(mat(o_w1_, dims_.hidden, dims_.input()), 1.0 / std::sqrt(static_cast<double>(dims_.input())));
    fill(mat(o_w2_, dims_.hidden, dims_.hidden), 1.0 / std::sqrt(static_cast<double>(dims_.hidden)));
    fill(mat(o_w3_, dims_.queries(), dims_.hidden), 1.0 / std::sqrt(static_cast<double>(dims_.hidden)));
  }

  const TinyDenoiserDims& dims() const { return dims_; }
  Eigen::Index parameter_count() const { return size_; }
  const VectorXd& parameters() const { return params_; }
  void set_parameters(const VectorXd& p) {
    if (p.size() != size_) throw InvalidArgument("TinyDenoiser: parameter vector has the wrong size");
    params_ = p;
  }

  VectorXd predict(const VectorXd& noisy, const PolicyCondition& c, int tau) const override {
    DenoisingSample s;
    s.noisy = noisy;
    s.condition = c;
    s.tau = tau;
    Forward f = forward({s});
    return f.out.col(0);
  }

  /// Mean masked loss over the batch and, when `grad` is given, its
  /// gradient with respect to parameters().
  double loss_and_gradient(const std::vector<DenoisingSample>& batch, VectorXd* grad) const {
    if (batch.empty()) throw InvalidArgument("loss_and_gradient: empty batch");
    const Forward f = forward(batch);
    const auto nb = static_cast<Eigen::Index>(batch.size());
    Eigen::MatrixXd g_out(dims_.queries(), nb);
    double loss = 0.0;
    for (Eigen::Index b = 0; b < nb; ++b) {
      const auto& s = batch[static_cast<std::size_t>(b)];
      check_sample(s);
      const VectorXd w = query_weights(s.condition.available, dims_.horizon);
      const VectorXd r = f.out.col(b) - s.eps;
      const double wsum = w.sum();
      loss += (w.array() * r.array().square()).sum() / wsum;
      g_out.col(b) = (2.0 / wsum) * (w.array() * r.array()).matrix();
    }
    loss /= static_cast<double>(nb);
    if (!grad) return loss;
    g_out /= static_cast<double>(nb);

    grad->setZero(size_);
    VectorXd& g = *grad;
    mat(g, o_w3_, dims_.queries(), dims_.hidden).noalias() = g_out * f.h2.transpose();
    g.segment(o_b3_, dims_.queries()) = g_out.rowwise().sum();
    for (Eigen::Index b = 0; b < nb; ++b) {
      const auto& s = batch[static_cast<std::size_t>(b)];
      g[o_skip_ + s.tau - 1] += g_out.col(b).dot(f.noisy.col(b));
    }
    const Eigen::MatrixXd g_u2 = (cmat(o_w3_, dims_.queries(), dims_.hidden).transpose() * g_out).cwiseProduct(
        (1.0 - f.h2.array().square()).matrix());
    mat(g, o_w2_, dims_.hidden, dims_.hidden).noalias() = g_u2 * f.h1.transpose();
    g.segment(o_b2_, dims_.hidden) = g_u2.rowwise().sum();
    const Eigen::MatrixXd g_u1 = (cmat(o_w2_, dims_.hidden, dims_.hidden).transpose() * g_u2).cwiseProduct(
        (1.0 - f.h1.array().square()).matrix());
    mat(g, o_w1_, dims_.hidden, dims_.input()).noalias() = g_u1 * f.x.transpose();
    g.segment(o_b1_, dims_.hidden) = g_u1.rowwise().sum();
    const Eigen::MatrixXd g_x = cmat(o_w1_, dims_.hidden, dims_.input()).transpose() * g_u1;

    MatMap g_wt = mat(g, o_wt_, dims_.embed, kTokenWidth);
    MatMap g_hpe = mat(g, o_hpe_, dims_.horizon, dims_.embed);
    MatMap g_cpe = mat(g, o_cpe_, 2, dims_.embed);
    for (Eigen::Index b = 0; b < nb; ++b) {
      const auto& s = batch[static_cast<std::size_t>(b)];
      for_each_token(s, [&](int t, const Eigen::Ref<const VectorXd>& v, int, int h, int kind) {
        const VectorXd gz = g_x.col(b).segment(static_cast<Eigen::Index>(t) * dims_.embed, dims_.embed);
        g_wt.noalias() += gz * v.transpose();
        g.segment(o_bt_, dims_.embed) += gz;
        if (kind == kQuery) {
          g_hpe.row(h) += gz.transpose();
        } else {
          g_cpe.row(kind) += gz.transpose();
        }
      });
    }
    return loss;
  }

  /// Gradient step: plain SGD by default, Adam after enable_adam().
  double train_on(const std::vector<DenoisingSample>& batch, double lr) override {
    VectorXd g;
    const double loss = loss_and_gradient(batch, &g);
    if (!adam_) {
      params_ -= lr * g;
      return loss;
    }
    if (m_.size() != size_) {
      m_ = VectorXd::Zero(size_);
      v_ = VectorXd::Zero(size_);
    }
    ++adam_t_;
    m_ = 0.9 * m_ + 0.1 * g;
    v_ = 0.999 * v_ + 0.001 * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(adam_t_));
    const double c2 = 1.0 - std::pow(0.999, static_cast<double>(adam_t_));
    params_.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + 1e-8);
    return loss;
  }

  void enable_adam() { adam_ = true; }

  // Checkpoint: magic line, JSON header line, then raw little-endian doubles
  // for the parameters followed by the EMA shadow.
  void save(const std::string& path, const VectorXd& ema, const nlohmann::json& extra = {}) const {
    if (ema.size() != size_) throw InvalidArgument("save: EMA shadow has the wrong size");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write checkpoint '" + path + "'");
    nlohmann::json header = extra;
    header["xmopkit_version"] = std::string(kVersion);
    header["dims"] = dims_.to_json();
    header["parameter_count"] = size_;
    out << kMagic << '\n' << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(params_.data()), static_cast<std::streamsize>(sizeof(double) * size_));
    out.write(reinterpret_cast<const char*>(ema.data()), static_cast<std::streamsize>(sizeof(double) * size_));
    if (!out) throw NumericalError("failed writing checkpoint '" + path + "'");
  }

  struct Checkpoint {
    nlohmann::json header;
    VectorXd parameters;
    VectorXd ema;
  };

  static Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open checkpoint '" + path + "'");
    std::string magic, header;
    std::getline(in, magic);
    if (magic != kMagic) throw InvalidArgument("'" + path + "' is not an xmopkit checkpoint");
    std::getline(in, header);
    Checkpoint c;
    c.header = nlohmann::json::parse(header);
    const auto n = c.header.at("parameter_count").get<Eigen::Index>();
    c.parameters.resize(n);
    c.ema.resize(n);
    in.read(reinterpret_cast<char*>(c.parameters.data()), static_cast<std::streamsize>(sizeof(double) * n));
    in.read(reinterpret_cast<char*>(c.ema.data()), static_cast<std::streamsize>(sizeof(double) * n));
    if (!in) throw InvalidArgument("checkpoint '" + path + "' is truncated");
    return c;
  }

 private:
  static constexpr const char* kMagic = "XMOPKIT-TINY-DENOISER v1";
  enum TokenKind { kObservation = 0, kGoal = 1, kQuery = 2 };

  struct Forward {
    Eigen::MatrixXd x, h1, h2, out, noisy;
  };

  void layout() {
    Eigen::Index o = 0;
    auto take = [&](Eigen::Index n) {
      const Eigen::Index at = o;
      o += n;
      return at;
    };
    const Eigen::Index e = dims_.embed;
    const Eigen::Index hd = dims_.hidden;
    o_wt_ = take(e * kTokenWidth);
    o_bt_ = take(e);
    o_hpe_ = take(dims_.horizon * e);
    o_cpe_ = take(2 * e);
    o_w1_ = take(hd * dims_.input());
    o_b1_ = take(hd);
    o_w2_ = take(hd * hd);
    o_b2_ = take(hd);
    o_w3_ = take(dims_.queries() * hd);
    o_b3_ = take(dims_.queries());
    o_skip_ = take(dims_.train_steps);
    size_ = o;
  }

  MatMap mat(Eigen::Index off, Eigen::Index rows, Eigen::Index cols) { return mat(params_, off, rows, cols); }
  static MatMap mat(VectorXd& v, Eigen::Index off, Eigen::Index rows, Eigen::Index cols) {
    return MatMap(v.data() + off, rows, cols);
  }
  ConstMatMap cmat(Eigen::Index off, Eigen::Index rows, Eigen::Index cols) const {
    return ConstMatMap(params_.data() + off, rows, cols);
  }

  void check_sample(const DenoisingSample& s) const {
    if (s.noisy.size() != dims_.queries()) throw InvalidArgument("TinyDenoiser: query vector has the wrong size");
    if (static_cast<int>(s.condition.available.size()) != dims_.slots ||
        s.condition.observation.rows() != dims_.slots || s.condition.observation.cols() != kTokenWidth) {
      throw InvalidArgument("TinyDenoiser: condition does not match the token layout");
    }
    if (s.tau < 1 || s.tau > dims_.train_steps) throw InvalidArgument("TinyDenoiser: diffusion step out of range");
  }

  // Calls fn(token index, value, slot, horizon index, kind) for every
  // available token.
  template <class Fn>
  void for_each_token(const DenoisingSample& s, Fn&& fn) const {
    const auto& avail = s.condition.available;
    for (int l = 0; l < dims_.slots; ++l) {
      if (avail[static_cast<std::size_t>(l)]) fn(observation_token(l), s.condition.observation.row(l).transpose(), l, 0, kObservation);
    }
    fn(goal_token(dims_.slots), s.condition.goal, dims_.slots - 1, 0, kGoal);
    for (int h = 0; h < dims_.horizon; ++h) {
      for (int l = 0; l < dims_.slots; ++l) {
        if (!avail[static_cast<std::size_t>(l)]) continue;
        fn(query_token(dims_.slots, h + 1, l), s.noisy.segment(query_offset(dims_.slots, h, l), kTokenWidth), l, h, kQuery);
      }
    }
  }

  Forward forward(const std::vector<DenoisingSample>& batch) const {
    const auto nb = static_cast<Eigen::Index>(batch.size());
    const ConstMatMap wt = cmat(o_wt_, dims_.embed, kTokenWidth);
    const auto bt = params_.segment(o_bt_, dims_.embed);
    const ConstMatMap hpe = cmat(o_hpe_, dims_.horizon, dims_.embed);
    const ConstMatMap cpe = cmat(o_cpe_, 2, dims_.embed);
    Forward f;
    f.x = Eigen::MatrixXd::Zero(dims_.input(), nb);
    f.noisy.resize(dims_.queries(), nb);
    for (Eigen::Index b = 0; b < nb; ++b) {
      const auto& s = batch[static_cast<std::size_t>(b)];
      check_sample(s);
      for_each_token(s, [&](int t, const Eigen::Ref<const VectorXd>& v, int slot, int h, int kind) {
        VectorXd z = wt * v + bt + lpe_.row(slot).transpose();
        z += kind == kQuery ? VectorXd(hpe.row(h).transpose()) : VectorXd(cpe.row(kind).transpose());
        f.x.col(b).segment(static_cast<Eigen::Index>(t) * dims_.embed, dims_.embed) = z;
      });
      f.x.col(b).tail(dims_.embed) = step_table_.row(s.tau).transpose();
      VectorXd q = s.noisy;
      zero_missing(q, s.condition.available);
      f.noisy.col(b) = q;
    }
    f.h1 = ((cmat(o_w1_, dims_.hidden, dims_.input()) * f.x).colwise() + params_.segment(o_b1_, dims_.hidden))
               .array()
               .tanh()
               .matrix();
    f.h2 = ((cmat(o_w2_, dims_.hidden, dims_.hidden) * f.h1).colwise() + params_.segment(o_b2_, dims_.hidden))
               .array()
               .tanh()
               .matrix();
    f.out = (cmat(o_w3_, dims_.queries(), dims_.hidden) * f.h2).colwise() + params_.segment(o_b3_, dims_.queries());
    for (Eigen::Index b = 0; b < nb; ++b) {
      const auto& s = batch[static_cast<std::size_t>(b)];
      f.out.col(b) += params_[o_skip_ + s.tau - 1] * f.noisy.col(b);
      VectorXd col = f.out.col(b);
      zero_missing(col, s.condition.available);
      f.out.col(b) = col;
    }
    return f;
  }

  TinyDenoiserDims dims_;
  Eigen::Index o_wt_ = 0, o_bt_ = 0, o_hpe_ = 0, o_cpe_ = 0, o_w1_ = 0, o_b1_ = 0, o_w2_ = 0, o_b2_ = 0, o_w3_ = 0,
               o_b3_ = 0, o_skip_ = 0, size_ = 0;
  VectorXd params_;
  bool adam_ = false;
  VectorXd m_, v_;
  long adam_t_ = 0;
  Eigen::MatrixXd lpe_;
  Eigen::MatrixXd step_table_;
};

}  // namespace xmopkit
