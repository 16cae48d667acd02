#include "dcl/evaluation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dcl/linalg.hpp"

namespace dcl {

namespace {

Tensor with_intercept(const Tensor& x) {
  Tensor out({x.rows(), x.cols() + 1});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j);
    out.at(i, x.cols()) = 1;
  }
  return out;
}

// coef is (p+1) x q from a fit with intercept; splits into (q x p, q).
void split_affine(const Tensor& coef, Tensor& mat, Tensor& offset) {
  const std::size_t p = coef.rows() - 1, q = coef.cols();
  mat = Tensor({q, p});
  offset = Tensor({q});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j) mat.at(j, i) = coef.at(i, j);
  for (std::size_t j = 0; j < q; ++j) offset[j] = coef.at(p, j);
}

}  // namespace

AlignmentResult fit_alignment(const Tensor& x_true, const Tensor& x_rec) {
  if (x_true.rank() != 2 || x_rec.rank() != 2 || x_true.rows() != x_rec.rows())
    throw std::invalid_argument("fit_alignment: shape mismatch");
  if (x_true.rows() < x_true.cols() + 1)
    throw std::invalid_argument("fit_alignment: need at least d+1 samples");
  x_true.require_finite("alignment x_true");
  x_rec.require_finite("alignment x_rec");

  AlignmentResult out;
  LstsqResult fwd = lstsq(with_intercept(x_true), x_rec);
  split_affine(fwd.coef, out.L, out.b);
  out.residual_fwd = fwd.residual;

  LstsqResult rev = lstsq(with_intercept(x_rec), x_true);
  split_affine(rev.coef, out.L_prime, out.b_prime);
  out.residual_rev = rev.residual;

  out.rank_deficient = fwd.rank_deficient || rev.rank_deficient;
  return out;
}

real r2_score(const Tensor& target, const Tensor& pred) {
  if (!target.same_shape(pred) || target.rank() != 2)
    throw std::invalid_argument("r2_score: shape mismatch");
  const std::size_t n = target.rows(), d = target.cols();
  if (n < 2) throw std::invalid_argument("r2_score: need at least 2 samples");
  real ss_res = 0, ss_tot = 0;
  for (std::size_t j = 0; j < d; ++j) {
    real mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += target.at(i, j);
    mean /= static_cast<real>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const real r = target.at(i, j) - pred.at(i, j);
      const real t = target.at(i, j) - mean;
      ss_res += r * r;
      ss_tot += t * t;
    }
  }
  if (ss_tot <= 0)
    throw std::invalid_argument("r2_score: target has zero variance");
  return 1 - ss_res / ss_tot;
}

real r2_latent(const Tensor& x_true, const Tensor& x_rec,
               const AlignmentResult& align) {
  // pred = L' xhat + b'
  Tensor pred = matmul_nt(x_rec, align.L_prime);
  for (std::size_t i = 0; i < pred.rows(); ++i)
    for (std::size_t j = 0; j < pred.cols(); ++j)
      pred.at(i, j) += align.b_prime[j];
  return r2_score(x_true, pred);
}

real lds_error(const Tensor& a_true, const Tensor& a_hat,
               const AlignmentResult& align) {
  if (a_true.rows() != a_true.cols() || !a_true.same_shape(a_hat))
    throw std::invalid_argument("lds_error: matrices must be square, same d");
  Tensor conj = matmul(matmul(align.L_prime, a_hat), align.L);
  return frobenius_distance(a_true, conj);
}

// ---- dyn R^2 -----------------------------------------------------------------

real dyn_r2(const GeneratedSystem& system, const TrajectoryDataset& ds,
            DynamicsModel& model, const Tensor& xhat,
            const AlignmentResult& align, const DynR2Options& opt) {
  if (opt.n_steps < 1) throw std::invalid_argument("dyn_r2: n_steps must be >= 1");
  const std::size_t d = xhat.cols();
  const int n = opt.n_steps;

  std::vector<int> model_modes;
  if (!opt.identity_dynamics && model.is_switching())
    model_modes = model.infer_modes(xhat, ds.trial_bounds);

  // Count valid rows first.
  std::size_t rows = 0;
  for (const auto& [s, e] : ds.trial_bounds)
    if (e - s > static_cast<std::size_t>(n)) rows += e - s - n;
  if (rows < 2) throw std::invalid_argument("dyn_r2: not enough valid steps");

  Tensor model_side({rows, d});
  Tensor true_side({rows, d});
  std::vector<real> v(d), w(d), scratch(d);
  std::span<const real> empty_u;

  std::size_t r = 0;
  for (const auto& [s, e] : ds.trial_bounds) {
    if (e - s <= static_cast<std::size_t>(n)) continue;
    for (std::size_t t = s; t + n < e; ++t, ++r) {
      // Model side: n hard applications of fhat in recovered space.
      for (std::size_t j = 0; j < d; ++j) v[j] = xhat.at(t, j);
      if (!opt.identity_dynamics) {
        for (int step = 0; step < n; ++step) {
          const std::size_t tt = t + step;
          std::span<const real> u =
              ds.has_control() ? ds.control.row(tt) : empty_u;
          const int mode = model_modes.empty() ? 0 : model_modes[tt];
          model.apply_eval(v, mode, u, scratch);
          v = scratch;
        }
      }
      for (std::size_t j = 0; j < d; ++j) model_side.at(r, j) = v[j];

      // True side: map back, roll the ground-truth system, map forward.
      for (std::size_t j = 0; j < d; ++j) {
        real acc = align.b_prime[j];
        for (std::size_t jj = 0; jj < d; ++jj)
          acc += align.L_prime.at(j, jj) * xhat.at(t, jj);
        w[j] = acc;
      }
      for (int step = 0; step < n; ++step) {
        const std::size_t tt = t + step;
        if (system.lds) {
          scratch = matvec(system.lds->A, w);
          if (system.lds->B && ds.has_control()) {
            const Tensor& bmat = *system.lds->B;
            for (std::size_t j = 0; j < d; ++j) {
              real acc = 0;
              for (std::size_t c = 0; c < bmat.cols(); ++c)
                acc += bmat.at(j, c) * ds.control.at(tt, c);
              scratch[j] += acc;
            }
          }
        } else if (system.slds) {
          scratch = matvec(system.slds->bank[ds.modes[tt]], w);
        } else if (system.lorenz) {
          lorenz_step(*system.lorenz, w, scratch);
        } else {
          scratch = w;
        }
        w = scratch;
      }
      for (std::size_t j = 0; j < d; ++j) {
        real acc = align.b[j];
        for (std::size_t jj = 0; jj < d; ++jj)
          acc += align.L.at(j, jj) * w[jj];
        true_side.at(r, j) = acc;
      }
    }
  }
  model_side.require_finite("dyn_r2 model rollout");
  true_side.require_finite("dyn_r2 true rollout");
  return r2_score(model_side, true_side);
}

// ---- Hungarian assignment -------------------------------------------------------

namespace {

// Potentials-based Hungarian algorithm, O(n^3), minimizing total cost.
std::vector<int> hungarian_min(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

std::vector<int> hungarian_max(const Tensor& score) {
  if (score.rank() != 2 || score.rows() != score.cols())
    throw std::invalid_argument("hungarian_max: square matrix required");
  const std::size_t n = score.rows();
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      cost[i][j] = -static_cast<double>(score.at(i, j));
  return hungarian_min(cost);
}

real cluster_accuracy(std::span<const int> true_modes,
                      std::span<const int> predicted_modes, int num_modes) {
  if (true_modes.size() != predicted_modes.size() || true_modes.empty())
    throw std::invalid_argument("cluster_accuracy: sequence length mismatch");
  if (num_modes > 64)
    throw std::invalid_argument("cluster_accuracy: K > 64 not supported");
  int k = num_modes;
  for (std::size_t i = 0; i < true_modes.size(); ++i) {
    if (true_modes[i] < 0 || predicted_modes[i] < 0)
      throw std::invalid_argument("cluster_accuracy: negative label");
    k = std::max(k, std::max(true_modes[i], predicted_modes[i]) + 1);
  }
  if (k > 64) throw std::invalid_argument("cluster_accuracy: K > 64 not supported");

  Tensor cooc({static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
  for (std::size_t i = 0; i < true_modes.size(); ++i)
    cooc.at(true_modes[i], predicted_modes[i]) += 1;
  std::vector<int> assign = hungarian_max(cooc);
  real matched = 0;
  for (int i = 0; i < k; ++i) matched += cooc.at(i, assign[i]);
  return matched / static_cast<real>(true_modes.size());
}

real mcc(const Tensor& x_true, const Tensor& x_rec) {
  if (x_true.rank() != 2 || x_rec.rank() != 2 ||
      x_true.rows() != x_rec.rows() || x_true.cols() != x_rec.cols())
    throw std::invalid_argument("mcc: shape mismatch");
  const std::size_t n = x_true.rows(), d = x_true.cols();

  auto column_stats = [n](const Tensor& m, std::size_t j, real& mean, real& sd) {
    mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += m.at(i, j);
    mean /= static_cast<real>(n);
    real var = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const real c = m.at(i, j) - mean;
      var += c * c;
    }
    sd = std::sqrt(var);
  };

  std::vector<real> mean_t(d), sd_t(d), mean_r(d), sd_r(d);
  for (std::size_t j = 0; j < d; ++j) {
    column_stats(x_true, j, mean_t[j], sd_t[j]);
    column_stats(x_rec, j, mean_r[j], sd_r[j]);
  }

  Tensor corr({d, d});
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      if (sd_t[a] <= 0 || sd_r[b] <= 0) {
        corr.at(a, b) = 0;  // zero-variance column
        continue;
      }
      real acc = 0;
      for (std::size_t i = 0; i < n; ++i)
        acc += (x_true.at(i, a) - mean_t[a]) * (x_rec.at(i, b) - mean_r[b]);
      corr.at(a, b) = std::abs(acc / (sd_t[a] * sd_r[b]));
    }

  std::vector<int> assign = hungarian_max(corr);
  real total = 0;
  for (std::size_t a = 0; a < d; ++a) total += corr.at(a, assign[a]);
  return total / static_cast<real>(d);
}

}  // namespace dcl
