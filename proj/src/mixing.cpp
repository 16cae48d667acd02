#include "dcl/mixing.hpp"

#include <cmath>
#include <stdexcept>

#include "dcl/linalg.hpp"

namespace dcl {

namespace {

real leaky(real x, real slope) { return x >= 0 ? x : slope * x; }

// y <- act(W y + b) applied row-wise in place.
void apply_square_layer(const Tensor& w, const Tensor& b, Tensor& rows,
                        bool activate, real slope) {
  Tensor out = matmul_nt(rows, w);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) {
      real v = out.at(i, j) + b[j];
      out.at(i, j) = activate ? leaky(v, slope) : v;
    }
  rows = std::move(out);
}

}  // namespace

MixingMlp build_mixing_mlp(std::size_t d, std::size_t D, std::size_t layers,
                           Rng& rng, real cond_threshold) {
  if (D < d) throw std::invalid_argument("build_mixing_mlp: D must be >= d");
  if (cond_threshold <= 1)
    throw std::invalid_argument("build_mixing_mlp: threshold must exceed 1");
  MixingMlp g;
  g.cond_threshold = cond_threshold;
  const real scale = real(1) / std::sqrt(static_cast<real>(d));
  for (std::size_t l = 0; l < layers; ++l) {
    int rejections = 0;
    for (;;) {
      Tensor w = Tensor::normal({d, d}, rng, 0, scale);
      if (condition_number(w) < cond_threshold) {
        g.weights.push_back(std::move(w));
        break;
      }
      if (++rejections >= 1000)
        throw std::runtime_error(
            "build_mixing_mlp: condition threshold too tight (1000 rejections)");
    }
    g.biases.push_back(Tensor::zeros({d}));
  }
  g.lift = orthonormal_columns(Tensor::normal({D, d}, rng, 0, 1));
  return g;
}

Tensor apply_mixing(const MixingMlp& g, const Tensor& x) {
  x.require_finite("apply_mixing input");
  if (x.cols() != g.latent_dim())
    throw std::invalid_argument("apply_mixing: dimension mismatch");
  Tensor h = x;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    const bool activate = l + 1 < g.weights.size();  // nonlinearity between layers
    apply_square_layer(g.weights[l], g.biases[l], h, activate,
                       g.activation_slope);
  }
  return matmul_nt(h, g.lift);
}

LowRankMixing build_low_rank_mixing(std::size_t n, std::size_t m,
                                    std::size_t rank, std::size_t inner_layers,
                                    Rng& rng, real cond_threshold) {
  if (rank == 0 || rank > std::min(n, m))
    throw std::invalid_argument("build_low_rank_mixing: invalid rank");
  LowRankMixing g;
  for (;;) {
    g.project = Tensor::normal({rank, n}, rng, 0,
                               real(1) / std::sqrt(static_cast<real>(n)));
    if (numerical_rank(g.project) == static_cast<int>(rank)) break;
  }
  g.lift = orthonormal_columns(Tensor::normal({m, rank}, rng, 0, 1));
  if (inner_layers > 0) {
    g.inner = build_mixing_mlp(rank, rank, inner_layers, rng, cond_threshold);
    // Keep the inner map exactly r -> r; replace its lift by the identity so
    // the outer lift controls the final rank.
    g.inner->lift = Tensor::identity(rank);
  }
  return g;
}

Tensor apply_mixing(const LowRankMixing& g, const Tensor& x) {
  x.require_finite("apply_mixing input");
  Tensor h = matmul_nt(x, g.project);
  if (g.inner) h = apply_mixing(*g.inner, h);
  return matmul_nt(h, g.lift);
}

void TimeLagConfig::validate() const {
  if (lag_indices.empty()) throw std::invalid_argument("time-lag: k must be >= 1");
  if (lag_indices.front() != tau)
    throw std::invalid_argument("time-lag: first lag must equal tau");
  if (lag_indices.back() != 0)
    throw std::invalid_argument("time-lag: last lag must be 0");
  for (std::size_t i = 1; i < lag_indices.size(); ++i)
    if (lag_indices[i] >= lag_indices[i - 1])
      throw std::invalid_argument("time-lag: lags must be strictly decreasing");
}

TimeLagConfig make_equidistant_lags(std::size_t k, std::size_t tau) {
  TimeLagConfig cfg;
  cfg.tau = tau;
  if (k == 1) {
    if (tau != 0)
      throw std::invalid_argument("time-lag: k = 1 requires tau = 0");
    cfg.lag_indices = {0};
    return cfg;
  }
  if (k > tau + 1)
    throw std::invalid_argument("time-lag: k must be <= tau + 1");
  for (std::size_t i = 0; i < k; ++i) {
    double frac = static_cast<double>(i) / static_cast<double>(k - 1);
    cfg.lag_indices.push_back(
        static_cast<std::size_t>(std::llround((1.0 - frac) * tau)));
  }
  cfg.validate();
  return cfg;
}

Tensor time_lag_embed(const Tensor& y, const TimeLagConfig& cfg) {
  cfg.validate();
  const std::size_t T = y.rows(), m = y.cols(), k = cfg.k();
  if (T <= cfg.tau)
    throw std::invalid_argument("time_lag_embed: series shorter than tau");
  Tensor out({T - cfg.tau, k * m});
  for (std::size_t i = 0; i + cfg.tau < T; ++i) {
    for (std::size_t block = 0; block < k; ++block) {
      const std::size_t src = i + cfg.tau - cfg.lag_indices[block];
      for (std::size_t j = 0; j < m; ++j)
        out.at(i, block * m + j) = y.at(src, j);
    }
  }
  return out;
}

TrajectoryDataset time_lag_embed_dataset(const TrajectoryDataset& ds,
                                         const TimeLagConfig& cfg) {
  cfg.validate();
  if (cfg.tau == 0 && cfg.k() == 1) return ds;
  if (ds.observations.size() == 0)
    throw std::invalid_argument("time_lag_embed_dataset: no observations");
  const std::size_t m = ds.observations.cols();
  const std::size_t d = ds.latent_dim();

  std::size_t total = 0;
  for (const auto& [s, e] : ds.trial_bounds) {
    if (e - s <= cfg.tau)
      throw std::invalid_argument("time_lag_embed_dataset: trial shorter than tau");
    total += e - s - cfg.tau;
  }

  TrajectoryDataset out;
  out.seed = ds.seed;
  out.latents = Tensor({total, d});
  out.observations = Tensor({total, cfg.k() * m});
  if (ds.has_modes()) out.modes.assign(total, 0);
  if (ds.has_control()) out.control = Tensor({total, ds.control.cols()});

  std::size_t cursor = 0;
  for (const auto& [s, e] : ds.trial_bounds) {
    const std::size_t len = e - s - cfg.tau;
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t block = 0; block < cfg.k(); ++block) {
        const std::size_t src = s + i + cfg.tau - cfg.lag_indices[block];
        for (std::size_t j = 0; j < m; ++j)
          out.observations.at(cursor + i, block * m + j) =
              ds.observations.at(src, j);
      }
      for (std::size_t j = 0; j < d; ++j)
        out.latents.at(cursor + i, j) = ds.latents.at(s + i, j);
      if (ds.has_modes()) out.modes[cursor + i] = ds.modes[s + i];
      if (ds.has_control())
        for (std::size_t j = 0; j < ds.control.cols(); ++j)
          out.control.at(cursor + i, j) = ds.control.at(s + i, j);
    }
    out.trial_bounds.emplace_back(cursor, cursor + len);
    cursor += len;
  }
  out.validate();
  return out;
}

}  // namespace dcl
