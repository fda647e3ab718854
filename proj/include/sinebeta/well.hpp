#pragma once

// Exit problem for the frozen-drift diffusion dS = -V'(S) dt + dB in
//
//   V(r) = -(1/2) (lambda beta/4 sinh r + log cosh r),
//
// and for its angle form d theta = lambda beta/4 dt + 2 sin(theta/2) dB with
// S = log tan(theta/4). Escape of S to +infinity is theta reaching 2 pi.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sinebeta::well {

struct WellSpec {
  double beta = 1.0;
  double lambda = 1.0;

  double slope() const { return lambda * beta / 4.0; }
  /// 8 pi / (beta lambda): leading-order mean exit time.
  double time_scale() const;
};

/// Throws std::invalid_argument unless beta, lambda > 0. Warns when the well
/// is absent (lambda beta / 8 >= 1/4).
std::vector<std::string> validate(const WellSpec& spec);
bool well_exists(const WellSpec& spec);

double potential(double r, const WellSpec& spec);
/// V'(r).
double potential_slope(double r, const WellSpec& spec);
/// V(x) - V(y) without forming either term when both are huge.
double potential_gap(double x, double y, const WellSpec& spec);

struct CriticalPoints {
  double a = 0.0;  // local minimum (well bottom)
  double b = 0.0;  // local maximum (barrier top)
  double v_a = 0.0;
  double v_b = 0.0;
};

class DegenerateWellError : public std::domain_error {
 public:
  explicit DegenerateWellError(const WellSpec& spec);
};

/// Roots of V' by bracketed root finding. Throws DegenerateWellError when
/// lambda beta / 8 >= 1/4.
CriticalPoints critical_points(const WellSpec& spec);

struct QuadratureSettings {
  double rel_tol = 1e-8;
  double truncation_ratio = 1e-16;  // relative to the running peak
  std::size_t max_segments = 4000;  // per one-dimensional integral

  double log_drop() const;
};

void validate(const QuadratureSettings& qset);

struct QuadratureResult {
  double value = 0.0;
  double est_error = 0.0;
  std::size_t evaluations = 0;
};

class QuadratureFailure : public std::runtime_error {
 public:
  QuadratureFailure(const std::string& what, QuadratureResult partial);
  const QuadratureResult& partial() const noexcept { return partial_; }

 private:
  QuadratureResult partial_;
};

/// log of int_{-inf}^x exp(2 [V(x) - V(y)]) dy.
double log_inner_integral(double x, const WellSpec& spec,
                          const CriticalPoints& cp, const QuadratureSettings& qset,
                          std::size_t* evaluations = nullptr,
                          double* rel_error = nullptr);

/// t(r) = 2 int_r^inf dx int_{-inf}^x exp(2 [V(x) - V(y)]) dy, the mean time
/// for S started at r to escape. Throws QuadratureFailure if the tolerance is
/// not met within the segment budget.
QuadratureResult expected_exit_time(double r, const WellSpec& spec,
                                    const QuadratureSettings& qset = {});

struct LaplaceSettings {
  std::size_t max_iterations = 1000;
  double grid_step = 0.005;
  std::size_t picard_iterates = 8;  // sandwich checks
};

struct LaplaceResult {
  QuadratureResult g;              // value at r, est_error, operator sweeps
  double rescaled_xi = 0.0;        // xi beta lambda / (8 pi)
  double exit_time = 0.0;          // t(r) on the same grid
  double lower_bound = 0.0;        // 1 - xi' t(r)
  double upper_bound = 0.0;        // second Picard iterate
  std::vector<double> picard;      // g_0 = 1, g_{k+1} = 1 - xi' T g_k, at r
  bool sandwich_holds = false;     // g_{2k+1}(r) <= g(r) <= g_{2k}(r) for all k
  std::size_t iterations = 0;
  bool converged = false;
};

/// Laplace transform E_r[exp(-xi' zeta)] of the escape time at rescaled rate
/// xi' = xi beta lambda / (8 pi), from the fixed point
///   g = 1 - 2 xi' int_r^inf int_{-inf}^x exp(2[V(x) - V(y)]) g(y) dy dx
/// discretized on a uniform grid. The iteration starts at g = 1 and is damped
/// so that it contracts for every xi > 0. Non-convergence is reported through
/// LaplaceResult::converged.
LaplaceResult laplace_g(double r, double xi, const WellSpec& spec,
                        const QuadratureSettings& qset = {},
                        const LaplaceSettings& lset = {});

/// 4 arctan(beta^{1/4}).
double default_theta0(double beta);

/// Angle corresponding to the potential coordinate r: 4 arctan(exp(r)).
double theta_from_r(double r);

struct PassageSettings {
  double step = 0.01;
  double censor_factor = 100.0;  // paths longer than this * 8 pi/(beta lambda)
  int workers = 0;
};

struct PassageSample {
  std::vector<double> raw_times;  // physical, uncensored paths only
  double rescale = 0.0;           // beta lambda / (8 pi)
  std::size_t censored = 0;
  double theta0 = 0.0;

  std::vector<double> rescaled() const;
};

/// First time the Euler path of theta started at theta0 reaches 2 pi, or
/// +infinity if it has not by `cap`.
double passage_time(const WellSpec& spec, double theta0, double step, double cap,
                    std::uint64_t key);

/// n independent passage times, path i on substream (seed, i). OpenMP.
PassageSample sample_passage_times(const WellSpec& spec, double theta0,
                                   std::size_t n, std::uint64_t seed,
                                   const PassageSettings& settings = {});

/// Serial reference for sample_passage_times.
PassageSample sample_passage_times_serial(const WellSpec& spec, double theta0,
                                          std::size_t n, std::uint64_t seed,
                                          const PassageSettings& settings = {});

}  // namespace sinebeta::well
