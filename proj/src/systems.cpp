#include "dcl/systems.hpp"

#include <cmath>
#include <stdexcept>

#include "dcl/linalg.hpp"

namespace dcl {

namespace {
constexpr real kDegToRad = real(M_PI / 180.0);

void add_noise(std::span<real> x, real sigma, Rng& rng) {
  if (sigma <= 0) return;
  for (real& v : x) v += static_cast<real>(rng.normal(0.0, sigma));
}
}  // namespace

Tensor rotation_matrix(std::size_t d, std::span<const real> angles_deg) {
  const std::size_t planes = d * (d - 1) / 2;
  if (angles_deg.size() != planes)
    throw std::invalid_argument("rotation_matrix: need d(d-1)/2 angles");
  Tensor m = Tensor::identity(d);
  std::size_t a = 0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j, ++a) {
      const real theta = angles_deg[a] * kDegToRad;
      const real c = std::cos(theta), s = std::sin(theta);
      // m <- m * G(i, j, theta): combine columns i and j.
      for (std::size_t r = 0; r < d; ++r) {
        const real mi = m.at(r, i), mj = m.at(r, j);
        m.at(r, i) = mi * c + mj * s;
        m.at(r, j) = -mi * s + mj * c;
      }
    }
  }
  return m;
}

std::vector<real> signed_plane_angles(std::size_t d, real magnitude_deg,
                                      Rng& rng) {
  std::vector<real> angles(d * (d - 1) / 2);
  for (real& a : angles) a = magnitude_deg * static_cast<real>(rng.sign());
  return angles;
}

std::vector<real> uniform_plane_angles(std::size_t d, real lo_deg, real hi_deg,
                                       Rng& rng) {
  std::vector<real> angles(d * (d - 1) / 2);
  for (real& a : angles) a = static_cast<real>(rng.uniform(lo_deg, hi_deg));
  return angles;
}

namespace {
void require_orthogonal(const Tensor& a) {
  Tensor gram = matmul(a.transposed(), a);
  real err = frobenius_distance(gram, Tensor::identity(a.rows()));
  if (err >= 1e-10)
    throw std::runtime_error("rotation matrix failed orthogonality check");
}
}  // namespace

LdsParams make_rotation_lds(std::size_t d, real magnitude_deg, Rng& rng,
                            bool uniform_angles) {
  LdsParams p;
  p.plane_angles_deg = uniform_angles
                           ? uniform_plane_angles(d, 0, magnitude_deg, rng)
                           : signed_plane_angles(d, magnitude_deg, rng);
  p.A = rotation_matrix(d, p.plane_angles_deg);
  require_orthogonal(p.A);
  return p;
}

SldsParams make_rotation_slds(std::size_t d, std::size_t num_modes,
                              real magnitude_deg, double switch_prob,
                              Rng& rng) {
  if (num_modes == 0) throw std::invalid_argument("slds: need at least 1 mode");
  if (switch_prob < 0 || (num_modes > 1 && switch_prob * (num_modes - 1) > 1.0))
    throw std::invalid_argument("slds: invalid switch probability");
  SldsParams p;
  for (std::size_t k = 0; k < num_modes; ++k) {
    auto angles = signed_plane_angles(d, magnitude_deg, rng);
    p.bank.push_back(rotation_matrix(d, angles));
    require_orthogonal(p.bank.back());
  }
  p.transition = Tensor({num_modes, num_modes});
  for (std::size_t i = 0; i < num_modes; ++i)
    for (std::size_t j = 0; j < num_modes; ++j)
      p.transition.at(i, j) =
          i == j ? real(1.0 - switch_prob * (num_modes - 1)) : real(switch_prob);
  p.prior.assign(num_modes, 1.0 / static_cast<double>(num_modes));
  return p;
}

Tensor simulate_lds(const LdsParams& params, const NoiseSpec& noise,
                    std::span<const real> x0, std::size_t T,
                    const Tensor* control, Rng& noise_rng) {
  const std::size_t d = params.A.rows();
  if (x0.size() != d) throw std::invalid_argument("simulate_lds: x0 dim mismatch");
  if (T < 2) throw std::invalid_argument("simulate_lds: T must be >= 2");
  if (control && (control->rows() < T))
    throw std::invalid_argument("simulate_lds: control too short");
  for (real v : x0)
    if (!std::isfinite(v)) throw std::invalid_argument("simulate_lds: x0 not finite");

  Tensor x({T, d});
  for (std::size_t j = 0; j < d; ++j) x.at(0, j) = x0[j];
  std::vector<real> next(d);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    auto cur = x.row(t);
    next = matvec(params.A, cur);
    if (params.B && control) {
      const Tensor& b = *params.B;
      for (std::size_t i = 0; i < d; ++i) {
        real s = 0;
        for (std::size_t j = 0; j < b.cols(); ++j) s += b.at(i, j) * control->at(t, j);
        next[i] += s;
      }
    }
    add_noise(next, noise.sigma, noise_rng);
    for (std::size_t j = 0; j < d; ++j) x.at(t + 1, j) = next[j];
  }
  return x;
}

std::vector<int> sample_markov_modes(const SldsParams& params, std::size_t T,
                                     Rng& mode_rng) {
  const std::size_t k = params.bank.size();
  std::vector<int> modes(T);
  modes[0] = mode_rng.categorical(params.prior);
  std::vector<double> row(k);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < k; ++j)
      row[j] = static_cast<double>(params.transition.at(modes[t - 1], j));
    modes[t] = mode_rng.categorical(row);
  }
  return modes;
}

SldsRollout simulate_slds(const SldsParams& params, const NoiseSpec& noise,
                          std::span<const real> x0, std::size_t T,
                          Rng& noise_rng, Rng& mode_rng) {
  const std::size_t d = params.bank.at(0).rows();
  if (x0.size() != d) throw std::invalid_argument("simulate_slds: x0 dim mismatch");
  SldsRollout out;
  out.modes = sample_markov_modes(params, T, mode_rng);
  out.latents = Tensor({T, d});
  for (std::size_t j = 0; j < d; ++j) out.latents.at(0, j) = x0[j];
  std::vector<real> next(d);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    next = matvec(params.bank[out.modes[t]], out.latents.row(t));
    add_noise(next, noise.sigma, noise_rng);
    for (std::size_t j = 0; j < d; ++j) out.latents.at(t + 1, j) = next[j];
  }
  return out;
}

void lorenz_step(const LorenzParams& params, std::span<const real> x,
                 std::span<real> out) {
  const real x1 = x[0], x2 = x[1], x3 = x[2];
  out[0] = x1 + params.dt * (params.sigma_l * (x2 - x1));
  out[1] = x2 + params.dt * (x1 * ((params.rho - x3) - x2));
  out[2] = x3 + params.dt * (x1 * x2 - params.beta * x3);
}

Tensor simulate_lorenz(const LorenzParams& params, const NoiseSpec& noise,
                       std::span<const real> x0, std::size_t T, Rng& noise_rng) {
  if (params.dt <= 0) throw std::invalid_argument("simulate_lorenz: dt must be > 0");
  if (x0.size() != 3) throw std::invalid_argument("simulate_lorenz: x0 must be 3-d");
  Tensor x({T, 3});
  for (std::size_t j = 0; j < 3; ++j) x.at(0, j) = x0[j];
  std::vector<real> next(3);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    lorenz_step(params, x.row(t), next);
    add_noise(next, noise.sigma, noise_rng);
    for (std::size_t j = 0; j < 3; ++j) {
      if (std::abs(next[j]) > real(1e6))
        throw std::runtime_error(
            "lorenz trajectory diverged (|x| > 1e6); use a smaller dt");
      x.at(t + 1, j) = next[j];
    }
  }
  return x;
}

Tensor make_control(const ControlSpec& spec, std::size_t T, Rng& rng) {
  Tensor u({T, spec.dims});
  switch (spec.kind) {
    case ControlKind::none:
      break;
    case ControlKind::step: {
      if (T < spec.step_width)
        throw std::invalid_argument("make_control: trial shorter than step window");
      const std::size_t slack = T - spec.step_width;
      const std::size_t center_start = slack / 2;
      // Window centered in the trial with a random offset of up to slack/4.
      const long max_off = static_cast<long>(slack / 4);
      long off = 0;
      if (max_off > 0)
        off = static_cast<long>(rng.uniform_index(2 * max_off + 1)) - max_off;
      const std::size_t t1 = center_start + off;
      const std::size_t t2 = t1 + spec.step_width;
      std::vector<real> magnitude(spec.dims);
      for (real& m : magnitude)
        m = static_cast<real>(rng.normal(0.0, spec.magnitude_std));
      for (std::size_t t = t1; t < t2; ++t)
        for (std::size_t j = 0; j < spec.dims; ++j) u.at(t, j) = magnitude[j];
      break;
    }
    case ControlKind::lds: {
      if (!spec.lds)
        throw std::invalid_argument("make_control: lds kind needs parameters");
      std::vector<real> x0(spec.dims);
      for (real& v : x0) v = static_cast<real>(rng.normal());
      u = simulate_lds(*spec.lds, spec.lds_noise, x0, T, nullptr, rng);
      break;
    }
  }
  return u;
}

void sample_vmf3(std::span<const real> mu, real kappa, Rng& rng,
                 std::span<real> out) {
  if (mu.size() != 3 || out.size() != 3)
    throw std::invalid_argument("sample_vmf3: d = 3 only");
  // Uniform case.
  if (kappa <= 0) {
    real n2 = 0;
    do {
      for (auto& v : out) v = static_cast<real>(rng.normal());
      n2 = out[0] * out[0] + out[1] * out[1] + out[2] * out[2];
    } while (n2 < real(1e-12));
    const real inv = real(1) / std::sqrt(n2);
    for (auto& v : out) v *= inv;
    return;
  }
  // Exact inverse-CDF for the cosine w on S^2, then a uniform azimuth.
  const double u = rng.uniform();
  const double w =
      1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa;
  const double phi = 2.0 * M_PI * rng.uniform();
  const double r = std::sqrt(std::max(0.0, 1.0 - w * w));
  double local[3] = {r * std::cos(phi), r * std::sin(phi), w};

  // Rotate the pole (0,0,1) onto mu via the Householder-free shortcut.
  double mz = mu[2];
  if (mz > 1.0 - 1e-12) {
    out[0] = static_cast<real>(local[0]);
    out[1] = static_cast<real>(local[1]);
    out[2] = static_cast<real>(local[2]);
    return;
  }
  if (mz < -1.0 + 1e-12) {
    out[0] = static_cast<real>(local[0]);
    out[1] = static_cast<real>(-local[1]);
    out[2] = static_cast<real>(-local[2]);
    return;
  }
  // Orthonormal basis (e1, e2, mu).
  double e1[3] = {-mu[1], mu[0], 0.0};
  double n = std::sqrt(e1[0] * e1[0] + e1[1] * e1[1]);
  e1[0] /= n;
  e1[1] /= n;
  double e2[3] = {mu[1] * e1[2] - mu[2] * e1[1], mu[2] * e1[0] - mu[0] * e1[2],
                  mu[0] * e1[1] - mu[1] * e1[0]};
  for (int i = 0; i < 3; ++i)
    out[i] = static_cast<real>(local[0] * e1[i] + local[1] * e2[i] +
                               local[2] * mu[i]);
}

GeneratedSystem generate_latents(const SystemConfig& cfg, std::uint64_t seed) {
  if (cfg.trials == 0 || cfg.trial_len < 2)
    throw std::invalid_argument("generate_latents: need trials >= 1, trial_len >= 2");

  GeneratedSystem out;
  Rng base(seed);
  Rng system_rng = base.stream("system");

  const std::size_t d =
      cfg.kind == SystemKind::lorenz || cfg.kind == SystemKind::vmf
          ? 3
          : cfg.latent_dim;
  std::size_t trial_len = cfg.trial_len;
  std::size_t trials = cfg.trials;

  // Realize system parameters once.
  switch (cfg.kind) {
    case SystemKind::identity: {
      LdsParams p;
      p.plane_angles_deg.assign(d * (d - 1) / 2, 0);
      p.A = Tensor::identity(d);
      out.lds = std::move(p);
      break;
    }
    case SystemKind::lds:
      out.lds = make_rotation_lds(d, cfg.angle_deg, system_rng, cfg.angles_uniform);
      break;
    case SystemKind::slds:
      out.slds = make_rotation_slds(d, cfg.num_modes, cfg.angle_deg,
                                    cfg.switch_prob, system_rng);
      break;
    case SystemKind::lorenz: {
      LorenzParams p;
      p.dt = cfg.dt;
      out.lorenz = p;
      break;
    }
    case SystemKind::vmf:
      trial_len = 2;  // (reference, positive) pairs
      break;
  }

  ControlSpec control_spec;
  control_spec.kind = cfg.control;
  control_spec.dims = cfg.control_dim;
  if (cfg.control == ControlKind::lds) {
    control_spec.lds = make_rotation_lds(cfg.control_dim, 10.0, system_rng, true);
    control_spec.lds_noise = NoiseSpec{0.01};
  }
  if (cfg.control != ControlKind::none && out.lds) {
    Rng b_rng = system_rng.stream("control_matrix");
    out.lds->B = Tensor::normal({d, cfg.control_dim}, b_rng, cfg.control_b_mean,
                                cfg.control_b_std);
  }

  const std::size_t T = trials * trial_len;
  TrajectoryDataset& ds = out.dataset;
  ds.seed = seed;
  ds.latents = Tensor({T, d});
  if (cfg.kind == SystemKind::slds) ds.modes.assign(T, 0);
  if (cfg.control != ControlKind::none) ds.control = Tensor({T, cfg.control_dim});

  const NoiseSpec noise{cfg.sigma_eps};
  Rng trial_root = base.stream("trial");
  std::vector<real> x0(d);

  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng trial_rng = trial_root.stream(trial);
    Rng x0_rng = trial_rng.stream("x0");
    Rng noise_rng = trial_rng.stream("noise");
    Rng mode_rng = trial_rng.stream("modes");
    Rng control_rng = trial_rng.stream("control");

    const std::size_t start = trial * trial_len;
    ds.trial_bounds.emplace_back(start, start + trial_len);
    for (real& v : x0) v = static_cast<real>(x0_rng.normal());

    Tensor control;
    if (cfg.control != ControlKind::none) {
      control = make_control(control_spec, trial_len, control_rng);
      for (std::size_t t = 0; t < trial_len; ++t)
        for (std::size_t j = 0; j < cfg.control_dim; ++j)
          ds.control.at(start + t, j) = control.at(t, j);
    }

    Tensor latents;
    switch (cfg.kind) {
      case SystemKind::identity:
      case SystemKind::lds:
        latents = simulate_lds(*out.lds, noise, x0, trial_len,
                               cfg.control != ControlKind::none ? &control : nullptr,
                               noise_rng);
        break;
      case SystemKind::slds: {
        SldsRollout roll =
            simulate_slds(*out.slds, noise, x0, trial_len, noise_rng, mode_rng);
        latents = std::move(roll.latents);
        for (std::size_t t = 0; t < trial_len; ++t)
          ds.modes[start + t] = roll.modes[t];
        break;
      }
      case SystemKind::lorenz:
        latents = simulate_lorenz(*out.lorenz, noise, x0, trial_len, noise_rng);
        break;
      case SystemKind::vmf: {
        latents = Tensor({trial_len, d});
        const real mu0[3] = {0, 0, 1};
        std::vector<real> ref(3), pos(3);
        sample_vmf3(mu0, cfg.vmf_kappa, x0_rng, ref);
        sample_vmf3(ref, cfg.vmf_kappa_pos, noise_rng, pos);
        for (std::size_t j = 0; j < 3; ++j) {
          latents.at(0, j) = ref[j];
          latents.at(1, j) = pos[j];
        }
        break;
      }
    }
    for (std::size_t t = 0; t < trial_len; ++t)
      for (std::size_t j = 0; j < d; ++j)
        ds.latents.at(start + t, j) = latents.at(t, j);
  }
  ds.validate();
  return out;
}

}  // namespace dcl
