#include "dcl/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dcl/linalg.hpp"

namespace dcl {

using nlohmann::json;

// ---- Encoder --------------------------------------------------------------

Encoder::Encoder(EncoderConfig cfg, Rng& init_rng) : cfg_(std::move(cfg)) {
  std::vector<std::size_t> dims;
  dims.push_back(cfg_.input_dim);
  for (auto h : cfg_.hidden_or_default()) dims.push_back(h);
  dims.push_back(cfg_.latent_dim);

  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    const real a = std::sqrt(real(6) / static_cast<real>(in + out));
    Parameter w{"encoder.w" + std::to_string(l),
                Tensor::uniform({in, out}, init_rng, -a, a)};
    Parameter b{"encoder.b" + std::to_string(l), Tensor::zeros({out})};
    params_.push_back(std::move(w));
    params_.push_back(std::move(b));
  }
}

Var Encoder::forward(Tape& tape, Var y) {
  const std::size_t layers = params_.size() / 2;
  Var h = y;
  for (std::size_t l = 0; l < layers; ++l) {
    Var w = tape.param(params_[2 * l]);
    Var b = tape.param(params_[2 * l + 1]);
    h = ops::add_rowvec(ops::matmul(h, w), b);
    if (l + 1 < layers) h = ops::gelu(h);
  }
  if (cfg_.unit_sphere) h = ops::row_normalize(h);
  return h;
}

Tensor Encoder::forward_eval(const Tensor& y) const {
  const std::size_t layers = params_.size() / 2;
  Tensor h = y;
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& w = params_[2 * l].value;
    const Tensor& b = params_[2 * l + 1].value;
    Tensor next = matmul(h, w);
    const bool activate = l + 1 < layers;
    for (std::size_t i = 0; i < next.rows(); ++i)
      for (std::size_t j = 0; j < next.cols(); ++j) {
        real v = next.at(i, j) + b[j];
        next.at(i, j) = activate ? gelu_scalar(v) : v;
      }
    h = std::move(next);
  }
  if (cfg_.unit_sphere) {
    for (std::size_t i = 0; i < h.rows(); ++i) {
      real r = 0;
      for (std::size_t j = 0; j < h.cols(); ++j) r += h.at(i, j) * h.at(i, j);
      r = std::sqrt(std::max(r, real(1e-24)));
      for (std::size_t j = 0; j < h.cols(); ++j) h.at(i, j) /= r;
    }
  }
  return h;
}

std::vector<Parameter*> Encoder::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

// ---- DynamicsModel ----------------------------------------------------------

namespace {

Tensor near_identity(std::size_t d, Rng& rng) {
  Tensor t = Tensor::normal({d, d}, rng, 0, 0.01);
  for (std::size_t i = 0; i < d; ++i) t.at(i, i) += 1;
  return t;
}

}  // namespace

DynamicsModel DynamicsModel::create(const DynamicsConfig& cfg, Rng& init_rng) {
  DynamicsModel m;
  m.cfg_ = cfg;
  const std::size_t d = cfg.latent_dim;
  switch (cfg.kind) {
    case DynamicsKind::identity:
      break;
    case DynamicsKind::linear:
      m.params_.push_back({"dynamics.A", near_identity(d, init_rng)});
      break;
    case DynamicsKind::grad_slds: {
      if (cfg.num_modes == 0)
        throw std::invalid_argument("grad_slds: num_modes must be >= 1");
      if (cfg.gumbel_tau <= 0)
        throw std::invalid_argument("grad_slds: gumbel_tau must be > 0");
      Tensor w({cfg.num_modes * d, d});
      for (std::size_t k = 0; k < cfg.num_modes; ++k) {
        Tensor wk = near_identity(d, init_rng);
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) w.at(k * d + i, j) = wk.at(i, j);
      }
      m.params_.push_back({"dynamics.W", std::move(w)});
      if (cfg.bank_bias)
        m.params_.push_back(
            {"dynamics.b", Tensor::zeros({cfg.num_modes, d})});
      break;
    }
    case DynamicsKind::oracle:
      throw std::invalid_argument("use create_oracle for oracle dynamics");
  }
  if (cfg.use_control) {
    if (cfg.kind == DynamicsKind::grad_slds)
      throw std::invalid_argument("control input is supported for identity/linear");
    m.params_.push_back(
        {"dynamics.B", Tensor::zeros({d, cfg.control_dim})});
  }
  return m;
}

DynamicsModel DynamicsModel::create_oracle(const DynamicsConfig& cfg,
                                           OracleDynamics frozen) {
  DynamicsModel m;
  m.cfg_ = cfg;
  m.cfg_.kind = DynamicsKind::oracle;
  m.frozen_ = std::move(frozen);
  if (!m.frozen_.lds && !m.frozen_.slds && !m.frozen_.lorenz)
    throw std::invalid_argument("oracle dynamics: nothing frozen");
  return m;
}

bool DynamicsModel::is_switching() const {
  if (cfg_.kind == DynamicsKind::grad_slds) return true;
  return cfg_.kind == DynamicsKind::oracle && frozen_.slds.has_value();
}

DynamicsModel::Forward DynamicsModel::forward_train(
    Tape& tape, Var xhat_t, std::optional<Var> xhat_next,
    const Tensor* control_rows, std::span<const int> oracle_modes,
    Rng* gumbel_rng) {
  const std::size_t n = tape.value(xhat_t).rows();
  const std::size_t d = tape.value(xhat_t).cols();
  Forward out;

  auto add_control = [&](Var pred) {
    if (!cfg_.use_control) return pred;
    if (!control_rows)
      throw std::invalid_argument("dynamics: control input missing");
    Var u = tape.constant(*control_rows);
    Parameter* b = nullptr;
    for (auto& p : params_)
      if (p.name == "dynamics.B") b = &p;
    Var bu = ops::matmul_nt(u, tape.param(*b));
    return ops::add(pred, bu);
  };

  switch (cfg_.kind) {
    case DynamicsKind::identity:
      out.prediction = add_control(xhat_t);
      return out;
    case DynamicsKind::linear: {
      Var a = tape.param(params_[0]);
      out.prediction = add_control(ops::matmul_nt(xhat_t, a));
      return out;
    }
    case DynamicsKind::grad_slds: {
      if (!xhat_next)
        throw std::invalid_argument(
            "grad_slds train forward requires the next latent");
      const std::size_t k = cfg_.num_modes;
      Var w = tape.param(params_[0]);
      Var y = ops::matmul_nt(xhat_t, w);  // [N x K d]
      if (cfg_.bank_bias) {
        for (auto& p : params_)
          if (p.name == "dynamics.b") y = ops::add_bank_bias(y, tape.param(p));
      }
      Var errors = ops::bank_sqdist(y, *xhat_next, k);
      Var logits = ops::recip_guard(errors, cfg_.logit_guard);
      if (gumbel_rng) {
        Tensor noise({n, k});
        for (std::size_t i = 0; i < noise.size(); ++i)
          noise[i] = static_cast<real>(gumbel_rng->gumbel());
        logits = ops::add(logits, tape.constant(std::move(noise)));
      }
      Var z = ops::softmax_rows(ops::scale(logits, real(1) / cfg_.gumbel_tau));
      out.prediction = ops::bank_mix(y, z);
      out.z = z;
      return out;
    }
    case DynamicsKind::oracle: {
      if (frozen_.lds) {
        Var a = tape.constant(frozen_.lds->A);
        Var pred = ops::matmul_nt(xhat_t, a);
        if (frozen_.lds->B && control_rows) {
          Var u = tape.constant(*control_rows);
          pred = ops::add(pred, ops::matmul_nt(u, tape.constant(*frozen_.lds->B)));
        }
        out.prediction = pred;
        return out;
      }
      if (frozen_.slds) {
        if (oracle_modes.size() != n)
          throw std::invalid_argument("oracle slds: batch modes missing");
        const std::size_t k = frozen_.slds->bank.size();
        Tensor w({k * d, d});
        for (std::size_t kk = 0; kk < k; ++kk)
          for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
              w.at(kk * d + i, j) = frozen_.slds->bank[kk].at(i, j);
        Tensor onehot({n, k});
        for (std::size_t i = 0; i < n; ++i) onehot.at(i, oracle_modes[i]) = 1;
        Var y = ops::matmul_nt(xhat_t, tape.constant(std::move(w)));
        out.prediction = ops::bank_mix(y, tape.constant(std::move(onehot)));
        return out;
      }
      // Lorenz Euler step assembled from column ops.
      const LorenzParams& p = *frozen_.lorenz;
      Var x1 = ops::slice_cols(xhat_t, 0, 1);
      Var x2 = ops::slice_cols(xhat_t, 1, 2);
      Var x3 = ops::slice_cols(xhat_t, 2, 3);
      Var o1 = ops::add(x1, ops::scale(ops::sub(x2, x1), p.dt * p.sigma_l));
      Var inner = ops::sub(ops::add_scalar(ops::scale(x3, -1), p.rho), x2);
      Var o2 = ops::add(x2, ops::scale(ops::mul(x1, inner), p.dt));
      Var o3 = ops::add(
          x3, ops::scale(ops::sub(ops::mul(x1, x2), ops::scale(x3, p.beta)), p.dt));
      out.prediction = ops::concat_cols({o1, o2, o3});
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

namespace {
// Bank matrices as a flat list plus optional biases, for the hard paths.
struct HardBank {
  std::vector<Tensor> mats;
  const Tensor* bias = nullptr;  // K x d
};
}  // namespace

std::vector<int> DynamicsModel::infer_modes(
    const Tensor& xhat,
    const std::vector<std::pair<std::size_t, std::size_t>>& bounds) const {
  HardBank bank;
  if (cfg_.kind == DynamicsKind::grad_slds) {
    const std::size_t d = cfg_.latent_dim;
    const Tensor& w = params_[0].value;
    for (std::size_t k = 0; k < cfg_.num_modes; ++k) {
      Tensor m({d, d});
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m.at(i, j) = w.at(k * d + i, j);
      bank.mats.push_back(std::move(m));
    }
    for (const auto& p : params_)
      if (p.name == "dynamics.b") bank.bias = &p.value;
  } else if (cfg_.kind == DynamicsKind::oracle && frozen_.slds) {
    bank.mats = frozen_.slds->bank;
  } else {
    throw std::invalid_argument("infer_modes: dynamics model has no modes");
  }

  const std::size_t k = bank.mats.size();
  const std::size_t d = xhat.cols();
  std::vector<int> modes(xhat.rows(), 0);
  std::vector<real> pred(d);
  for (const auto& [s, e] : bounds) {
    for (std::size_t t = s; t + 1 < e; ++t) {
      real best = std::numeric_limits<real>::infinity();
      int best_k = 0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        pred = matvec(bank.mats[kk], xhat.row(t));
        if (bank.bias)
          for (std::size_t j = 0; j < d; ++j) pred[j] += bank.bias->at(kk, j);
        real err = 0;
        for (std::size_t j = 0; j < d; ++j) {
          real diff = pred[j] - xhat.at(t + 1, j);
          err += diff * diff;
        }
        if (err < best) {
          best = err;
          best_k = static_cast<int>(kk);
        }
      }
      modes[t] = best_k;
    }
    // No successor for the final step of a trial; carry the previous mode.
    if (e - s >= 2) modes[e - 1] = modes[e - 2];
  }
  return modes;
}

void DynamicsModel::apply_eval(std::span<const real> x, int mode,
                               std::span<const real> u,
                               std::span<real> out) const {
  const std::size_t d = x.size();
  auto add_control_eval = [&](const Tensor* b) {
    if (!b || u.empty()) return;
    for (std::size_t i = 0; i < d; ++i) {
      real s = 0;
      for (std::size_t j = 0; j < b->cols(); ++j) s += b->at(i, j) * u[j];
      out[i] += s;
    }
  };

  switch (cfg_.kind) {
    case DynamicsKind::identity: {
      for (std::size_t i = 0; i < d; ++i) out[i] = x[i];
      add_control_eval(control_matrix());
      return;
    }
    case DynamicsKind::linear: {
      auto y = matvec(params_[0].value, x);
      for (std::size_t i = 0; i < d; ++i) out[i] = y[i];
      add_control_eval(control_matrix());
      return;
    }
    case DynamicsKind::grad_slds: {
      Tensor m = bank_matrix(static_cast<std::size_t>(mode));
      auto y = matvec(m, x);
      for (std::size_t i = 0; i < d; ++i) out[i] = y[i];
      for (const auto& p : params_)
        if (p.name == "dynamics.b")
          for (std::size_t i = 0; i < d; ++i)
            out[i] += p.value.at(static_cast<std::size_t>(mode), i);
      add_control_eval(control_matrix());
      return;
    }
    case DynamicsKind::oracle: {
      if (frozen_.lds) {
        auto y = matvec(frozen_.lds->A, x);
        for (std::size_t i = 0; i < d; ++i) out[i] = y[i];
        if (frozen_.lds->B && !u.empty()) {
          const Tensor& b = *frozen_.lds->B;
          for (std::size_t i = 0; i < d; ++i) {
            real s = 0;
            for (std::size_t j = 0; j < b.cols(); ++j) s += b.at(i, j) * u[j];
            out[i] += s;
          }
        }
        return;
      }
      if (frozen_.slds) {
        auto y = matvec(frozen_.slds->bank.at(static_cast<std::size_t>(mode)), x);
        for (std::size_t i = 0; i < d; ++i) out[i] = y[i];
        return;
      }
      lorenz_step(*frozen_.lorenz, x, out);
      return;
    }
  }
}

std::vector<Parameter*> DynamicsModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

const Tensor& DynamicsModel::linear_matrix() const {
  if (cfg_.kind == DynamicsKind::linear) return params_[0].value;
  if (cfg_.kind == DynamicsKind::oracle && frozen_.lds) return frozen_.lds->A;
  throw std::invalid_argument("linear_matrix: not a linear dynamics model");
}

Tensor DynamicsModel::bank_matrix(std::size_t k) const {
  if (cfg_.kind == DynamicsKind::grad_slds) {
    const std::size_t d = cfg_.latent_dim;
    const Tensor& w = params_[0].value;
    Tensor m({d, d});
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) m.at(i, j) = w.at(k * d + i, j);
    return m;
  }
  if (cfg_.kind == DynamicsKind::oracle && frozen_.slds)
    return frozen_.slds->bank.at(k);
  throw std::invalid_argument("bank_matrix: dynamics model has no bank");
}

const Tensor* DynamicsModel::control_matrix() const {
  for (const auto& p : params_)
    if (p.name == "dynamics.B") return &p.value;
  return nullptr;
}

// ---- KDE ---------------------------------------------------------------------

Var KdeCorrection::log_density(Tape& tape, Var query, SimilarityKind sim) const {
  if (!enabled) throw std::invalid_argument("kde: correction is disabled");
  if (anchors.size() == 0) throw std::invalid_argument("kde: empty anchor set");
  if (sim == SimilarityKind::dot_product)
    return ops::kde_log_vmf(query, anchors, kappa);
  return ops::kde_log_gauss(query, anchors, epsilon);
}

Tensor KdeCorrection::log_density_eval(const Tensor& query,
                                       SimilarityKind sim) const {
  Tape tape;
  Var q = tape.constant(query);
  Var v = log_density(tape, q, sim);
  return tape.value(v);
}

// ---- psi ---------------------------------------------------------------------

real psi_score(Encoder& encoder, DynamicsModel& dynamics, SimilarityKind sim,
               const KdeCorrection* kde, std::span<const real> y,
               std::span<const real> y_prime, std::span<const real> control) {
  Tensor ys({1, y.size()});
  Tensor yps({1, y_prime.size()});
  for (std::size_t j = 0; j < y.size(); ++j) ys.at(0, j) = y[j];
  for (std::size_t j = 0; j < y_prime.size(); ++j) yps.at(0, j) = y_prime[j];
  Tensor xhat = encoder.forward_eval(ys);
  Tensor xhat_p = encoder.forward_eval(yps);

  const std::size_t d = xhat.cols();
  std::vector<real> pred(d);
  int mode = 0;
  if (dynamics.is_switching()) {
    // Hard argmin against the candidate next latent.
    Tensor pair({2, d});
    for (std::size_t j = 0; j < d; ++j) {
      pair.at(0, j) = xhat.at(0, j);
      pair.at(1, j) = xhat_p.at(0, j);
    }
    mode = dynamics.infer_modes(pair, {{0, 2}})[0];
  }
  dynamics.apply_eval(xhat.row(0), mode, control, pred);

  real score = 0;
  if (sim == SimilarityKind::neg_sq_euclidean) {
    for (std::size_t j = 0; j < d; ++j) {
      real diff = pred[j] - xhat_p.at(0, j);
      score -= diff * diff;
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) score += pred[j] * xhat_p.at(0, j);
  }
  if (kde && kde->enabled) {
    Tensor lq = kde->log_density_eval(xhat_p, sim);
    score -= lq[0];
  }
  return score;
}

// ---- persistence ----------------------------------------------------------------

namespace {

json encoder_to_json(const Encoder& e) {
  const EncoderConfig& c = e.config();
  return json{{"input_dim", c.input_dim},
              {"latent_dim", c.latent_dim},
              {"hidden", c.hidden_or_default()},
              {"unit_sphere", c.unit_sphere}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.unit_sphere = j.at("unit_sphere").get<bool>();
  return c;
}

const char* kind_name(DynamicsKind k) {
  switch (k) {
    case DynamicsKind::identity: return "identity";
    case DynamicsKind::linear: return "linear";
    case DynamicsKind::grad_slds: return "grad_slds";
    case DynamicsKind::oracle: return "oracle";
  }
  return "?";
}

DynamicsKind kind_from_name(const std::string& s) {
  if (s == "identity") return DynamicsKind::identity;
  if (s == "linear") return DynamicsKind::linear;
  if (s == "grad_slds") return DynamicsKind::grad_slds;
  if (s == "oracle") return DynamicsKind::oracle;
  throw std::invalid_argument("unknown dynamics kind: " + s);
}

void save_params(const std::filesystem::path& dir, io::Manifest& m,
                 std::vector<Parameter>& params) {
  for (Parameter& p : params) {
    m.arrays.push_back({"param." + p.name, "f64", p.value.shape()});
    io::write_array_f64(dir / ("param." + p.name + ".bin"), p.value);
  }
}

void load_params(const std::filesystem::path& dir, const io::Manifest& m,
                 std::vector<Parameter>& params) {
  for (Parameter& p : params) {
    const auto* a = m.find_array("param." + p.name);
    if (!a) throw std::runtime_error("checkpoint missing param " + p.name);
    p.value = io::read_array_f64(dir / ("param." + p.name + ".bin"), a->dims);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, ModelBundle& model,
                     const std::string& meta_json) {
  std::filesystem::create_directories(dir);
  io::Manifest m;
  m.format = "dcl.checkpoint.v1";

  json spec;
  spec["similarity"] = model.similarity == SimilarityKind::dot_product
                           ? "dot_product"
                           : "neg_sq_euclidean";
  spec["encoder"] = encoder_to_json(model.encoder);
  if (model.encoder_positive)
    spec["encoder_positive"] = encoder_to_json(*model.encoder_positive);

  const DynamicsConfig& dc = model.dynamics.config();
  spec["dynamics"] = json{{"kind", kind_name(dc.kind)},
                          {"latent_dim", dc.latent_dim},
                          {"num_modes", dc.num_modes},
                          {"gumbel_tau", dc.gumbel_tau},
                          {"bank_bias", dc.bank_bias},
                          {"logit_guard", dc.logit_guard},
                          {"use_control", dc.use_control},
                          {"control_dim", dc.control_dim}};
  const OracleDynamics& fr = model.dynamics.frozen();
  if (fr.lds) {
    m.arrays.push_back({"oracle.A", "f64", fr.lds->A.shape()});
    io::write_array_f64(dir / "oracle.A.bin", fr.lds->A);
    if (fr.lds->B) {
      m.arrays.push_back({"oracle.B", "f64", fr.lds->B->shape()});
      io::write_array_f64(dir / "oracle.B.bin", *fr.lds->B);
    }
    spec["oracle"] = "lds";
  } else if (fr.slds) {
    const std::size_t k = fr.slds->bank.size(), d = fr.slds->bank[0].rows();
    Tensor stacked({k * d, d});
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          stacked.at(kk * d + i, j) = fr.slds->bank[kk].at(i, j);
    m.arrays.push_back({"oracle.bank", "f64", stacked.shape()});
    io::write_array_f64(dir / "oracle.bank.bin", stacked);
    spec["oracle"] = "slds";
    spec["oracle_modes"] = k;
  } else if (fr.lorenz) {
    spec["oracle"] = "lorenz";
    spec["oracle_lorenz"] = {{"sigma", fr.lorenz->sigma_l},
                             {"rho", fr.lorenz->rho},
                             {"beta", fr.lorenz->beta},
                             {"dt", fr.lorenz->dt}};
  }

  if (model.posthoc) {
    const DynamicsConfig& pc = model.posthoc->config();
    spec["posthoc"] = json{{"kind", kind_name(pc.kind)},
                           {"latent_dim", pc.latent_dim},
                           {"num_modes", pc.num_modes},
                           {"gumbel_tau", pc.gumbel_tau},
                           {"bank_bias", pc.bank_bias},
                           {"logit_guard", pc.logit_guard},
                           {"use_control", pc.use_control},
                           {"control_dim", pc.control_dim}};
    for (Parameter& p : model.posthoc->raw_params()) {
      std::string alias = "ph_" + p.name;
      m.arrays.push_back({"param." + alias, "f64", p.value.shape()});
      io::write_array_f64(dir / ("param." + alias + ".bin"), p.value);
    }
  }

  save_params(dir, m, model.encoder.raw_params());
  if (model.encoder_positive) {
    // Rename on disk to avoid clashing with the reference encoder.
    for (Parameter& p : model.encoder_positive->raw_params()) {
      std::string alias = "pos_" + p.name;
      m.arrays.push_back({"param." + alias, "f64", p.value.shape()});
      io::write_array_f64(dir / ("param." + alias + ".bin"), p.value);
    }
  }
  save_params(dir, m, model.dynamics.raw_params());

  io::write_manifest(dir / "manifest.txt", m);
  std::ofstream spec_out(dir / "spec.json");
  spec_out << spec.dump(2) << "\n";
  if (!meta_json.empty()) {
    std::ofstream meta(dir / "meta.json");
    meta << meta_json << "\n";
  }
}

ModelBundle load_checkpoint(const std::filesystem::path& dir) {
  io::Manifest m = io::read_manifest(dir / "manifest.txt");
  if (m.format != "dcl.checkpoint.v1")
    throw std::runtime_error("unexpected checkpoint format: " + m.format);
  std::ifstream spec_in(dir / "spec.json");
  if (!spec_in) throw std::runtime_error("checkpoint missing spec.json");
  json spec = json::parse(spec_in);

  ModelBundle out;
  out.similarity = spec.at("similarity") == "dot_product"
                       ? SimilarityKind::dot_product
                       : SimilarityKind::neg_sq_euclidean;

  Rng dummy(0);
  out.encoder = Encoder(encoder_from_json(spec.at("encoder")), dummy);
  load_params(dir, m, out.encoder.raw_params());

  if (spec.contains("encoder_positive")) {
    out.encoder_positive =
        Encoder(encoder_from_json(spec.at("encoder_positive")), dummy);
    for (Parameter& p : out.encoder_positive->raw_params()) {
      std::string alias = "param.pos_" + p.name;
      const auto* a = m.find_array(alias);
      if (!a) throw std::runtime_error("checkpoint missing " + alias);
      p.value = io::read_array_f64(dir / (alias + ".bin"), a->dims);
    }
  }

  const json& dj = spec.at("dynamics");
  DynamicsConfig dc;
  dc.kind = kind_from_name(dj.at("kind").get<std::string>());
  dc.latent_dim = dj.at("latent_dim").get<std::size_t>();
  dc.num_modes = dj.at("num_modes").get<std::size_t>();
  dc.gumbel_tau = dj.at("gumbel_tau").get<real>();
  dc.bank_bias = dj.at("bank_bias").get<bool>();
  dc.logit_guard = dj.at("logit_guard").get<real>();
  dc.use_control = dj.at("use_control").get<bool>();
  dc.control_dim = dj.at("control_dim").get<std::size_t>();

  if (dc.kind == DynamicsKind::oracle) {
    OracleDynamics frozen;
    const std::string which = spec.at("oracle").get<std::string>();
    if (which == "lds") {
      LdsParams p;
      const auto* a = m.find_array("oracle.A");
      p.A = io::read_array_f64(dir / "oracle.A.bin", a->dims);
      if (const auto* b = m.find_array("oracle.B"))
        p.B = io::read_array_f64(dir / "oracle.B.bin", b->dims);
      frozen.lds = std::move(p);
    } else if (which == "slds") {
      const auto* a = m.find_array("oracle.bank");
      Tensor stacked = io::read_array_f64(dir / "oracle.bank.bin", a->dims);
      const std::size_t k = spec.at("oracle_modes").get<std::size_t>();
      const std::size_t d = stacked.cols();
      SldsParams p;
      for (std::size_t kk = 0; kk < k; ++kk) {
        Tensor mat({d, d});
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j)
            mat.at(i, j) = stacked.at(kk * d + i, j);
        p.bank.push_back(std::move(mat));
      }
      p.transition = Tensor::identity(k);
      p.prior.assign(k, 1.0 / static_cast<double>(k));
      frozen.slds = std::move(p);
    } else {
      LorenzParams p;
      const json& lj = spec.at("oracle_lorenz");
      p.sigma_l = lj.at("sigma").get<real>();
      p.rho = lj.at("rho").get<real>();
      p.beta = lj.at("beta").get<real>();
      p.dt = lj.at("dt").get<real>();
      frozen.lorenz = p;
    }
    out.dynamics = DynamicsModel::create_oracle(dc, std::move(frozen));
  } else {
    out.dynamics = DynamicsModel::create(dc, dummy);
    load_params(dir, m, out.dynamics.raw_params());
  }

  if (spec.contains("posthoc")) {
    const json& pj = spec.at("posthoc");
    DynamicsConfig pc;
    pc.kind = kind_from_name(pj.at("kind").get<std::string>());
    pc.latent_dim = pj.at("latent_dim").get<std::size_t>();
    pc.num_modes = pj.at("num_modes").get<std::size_t>();
    pc.gumbel_tau = pj.at("gumbel_tau").get<real>();
    pc.bank_bias = pj.at("bank_bias").get<bool>();
    pc.logit_guard = pj.at("logit_guard").get<real>();
    pc.use_control = pj.at("use_control").get<bool>();
    pc.control_dim = pj.at("control_dim").get<std::size_t>();
    out.posthoc = DynamicsModel::create(pc, dummy);
    for (Parameter& p : out.posthoc->raw_params()) {
      std::string alias = "param.ph_" + p.name;
      const auto* a = m.find_array(alias);
      if (!a) throw std::runtime_error("checkpoint missing " + alias);
      p.value = io::read_array_f64(dir / (alias + ".bin"), a->dims);
    }
  }
  return out;
}

std::string load_checkpoint_meta(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) return "{}";
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dcl
