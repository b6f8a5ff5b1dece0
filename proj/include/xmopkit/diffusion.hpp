#pragma once

// Square-cosine noise schedule with DDPM forward noising and deterministic
// DDIM reverse steps.

#include <algorithm>
#include <cmath>
#include <vector>

#include "xmopkit/common.hpp"

namespace xmopkit {

struct DiffusionSchedule {
  int train_steps = 100;
  int infer_steps = 10;
  std::vector<double> alpha_bar;  // alpha_bar[0] = 1, alpha_bar[tau] for tau = 1..train_steps

  static DiffusionSchedule square_cosine(int train_steps = 100, int infer_steps = 10, double s = 0.008,
                                         double max_beta = 0.999) {
    if (train_steps < 1 || infer_steps < 1 || infer_steps > train_steps) {
      throw InvalidArgument("square_cosine: need 1 <= infer_steps <= train_steps");
    }
    auto f = [&](double t) {
      const double c = std::cos((t + s) / (1.0 + s) * M_PI / 2.0);
      return c * c;
    };
    DiffusionSchedule sc;
    sc.train_steps = train_steps;
    sc.infer_steps = infer_steps;
    sc.alpha_bar.assign(static_cast<std::size_t>(train_steps) + 1, 1.0);
    double prod = 1.0;
    for (int i = 0; i < train_steps; ++i) {
      const double beta = std::min(1.0 - f((i + 1.0) / train_steps) / f(static_cast<double>(i) / train_steps), max_beta);
      prod *= 1.0 - beta;
      sc.alpha_bar[static_cast<std::size_t>(i) + 1] = prod;
    }
    return sc;
  }

  double alpha(int tau) const {
    if (tau < 0 || tau > train_steps) throw InvalidArgument("diffusion step out of range");
    return alpha_bar[static_cast<std::size_t>(tau)];
  }

  /// Evenly strided inference steps, 91, 81, ..., 1 for 100/10. The last
  /// step (alpha_bar ~ 2e-7) is skipped: dividing by its square root in
  /// ddim_step would amplify prediction error about 2000x.
  std::vector<int> inference_steps() const {
    std::vector<int> out;
    const int stride = train_steps / infer_steps;
    for (int k = infer_steps - 1; k >= 0; --k) out.push_back(k * stride + 1);
    return out;
  }
};

inline VectorXd add_noise(const DiffusionSchedule& sc, const VectorXd& a0, const VectorXd& eps, int tau) {
  const double ab = sc.alpha(tau);
  return std::sqrt(ab) * a0 + std::sqrt(1.0 - ab) * eps;
}

/// Noise that maps `a0` to `x` at step tau; what a perfect denoiser returns.
inline VectorXd implied_noise(const DiffusionSchedule& sc, const VectorXd& x, const VectorXd& a0, int tau) {
  const double ab = sc.alpha(tau);
  if (!(ab < 1.0)) return VectorXd::Zero(x.size());
  return (x - std::sqrt(ab) * a0) / std::sqrt(1.0 - ab);
}

/// DDIM update with eta = 0 from step tau to tau_prev < tau.
inline VectorXd ddim_step(const DiffusionSchedule& sc, const VectorXd& x, const VectorXd& eps_hat, int tau,
                          int tau_prev) {
  if (tau_prev >= tau) throw InvalidArgument("ddim_step: tau_prev must be below tau");
  const double ab = sc.alpha(tau);
  const double ab_prev = sc.alpha(tau_prev);
  const VectorXd x0 = (x - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
  return std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps_hat;
}

}  // namespace xmopkit
