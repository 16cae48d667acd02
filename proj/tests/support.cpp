#include "support.hpp"

namespace dcl::testing {

namespace {

Parameter random_param(const std::string& name, std::vector<std::size_t> shape,
                       Rng& rng, real lo = -1, real hi = 1) {
  return Parameter{name, Tensor::uniform(std::move(shape), rng, lo, hi)};
}

// Reduce any tensor to a scalar with fixed random weights so every output
// entry contributes to the loss.
Var weighted_sum(Tape& tape, Var v, Rng& rng) {
  Tensor w = Tensor::uniform(tape.value(v).shape(), rng, -1, 1);
  return ops::sum_all(ops::mul(v, tape.constant(std::move(w))));
}

GradCheckResult check(std::vector<Parameter>& params,
                      const std::function<Var(Tape&, std::span<Parameter>)>& f) {
  return check_gradients(f, params, 1e-5, 1e-4);
}

}  // namespace

std::vector<PrimitiveCheck> primitive_checks() {
  std::vector<PrimitiveCheck> checks;

  auto add = [&](std::string name,
                 std::function<GradCheckResult(Rng&)> fn) {
    checks.push_back({std::move(name), std::move(fn)});
  };

  add("add/sub/mul/scale", [](Rng& rng) {
    std::vector<Parameter> params{random_param("a", {3, 4}, rng),
                                  random_param("b", {3, 4}, rng)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Var a = t.param(p[0]), b = t.param(p[1]);
      Var v = ops::sub(ops::add(a, ops::scale(b, 0.7)), ops::mul(a, b));
      Rng local = wrng;
      return weighted_sum(t, ops::add_scalar(v, 0.3), local);
    });
  });

  add("matmul", [](Rng& rng) {
    std::vector<Parameter> params{random_param("a", {3, 5}, rng),
                                  random_param("b", {5, 2}, rng)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Rng local = wrng;
      return weighted_sum(t, ops::matmul(t.param(p[0]), t.param(p[1])), local);
    });
  });

  add("matmul_nt", [](Rng& rng) {
    std::vector<Parameter> params{random_param("a", {4, 3}, rng),
                                  random_param("b", {6, 3}, rng)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Rng local = wrng;
      return weighted_sum(t, ops::matmul_nt(t.param(p[0]), t.param(p[1])), local);
    });
  });

  add("add_rowvec", [](Rng& rng) {
    std::vector<Parameter> params{random_param("a", {4, 3}, rng),
                                  random_param("v", {3}, rng)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Rng local = wrng;
      return weighted_sum(t, ops::add_rowvec(t.param(p[0]), t.param(p[1])), local);
    });
  });

  add("gelu", [](Rng& rng) {
    std::vector<Parameter> params{random_param("a", {5, 3}, rng, -3, 3)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Rng local = wrng;
      return weighted_sum(t, ops::gelu(t.param(p[0])), local);
    });
  });

  add("row_normalize", [](Rng& rng) {
    // Keep rows away from the origin so the normalization stays smooth.
    std::vector<Parameter> params{random_param("a", {4, 3}, rng, 0.5, 2.0)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Rng local = wrng;
      return weighted_sum(t, ops::row_normalize(t.param(p[0])), local);
    });
  });

  add("sqdist_rows/dot_rows", [](Rng& rng) {
    std::vector<Parameter> params{random_param("a", {5, 3}, rng),
                                  random_param("b", {5, 3}, rng)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Var a = t.param(p[0]), b = t.param(p[1]);
      Var v = ops::add(ops::sqdist_rows(a, b), ops::dot_rows(a, b));
      Rng local = wrng;
      return weighted_sum(t, v, local);
    });
  });

  add("sqdist_matrix", [](Rng& rng) {
    std::vector<Parameter> params{random_param("a", {4, 3}, rng),
                                  random_param("b", {6, 3}, rng)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Rng local = wrng;
      return weighted_sum(t, ops::sqdist_matrix(t.param(p[0]), t.param(p[1])),
                          local);
    });
  });

  add("recip_guard/softmax_rows", [](Rng& rng) {
    std::vector<Parameter> params{random_param("a", {4, 5}, rng, 0.1, 2.0)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Var logits = ops::recip_guard(t.param(p[0]), 1e-3);
      Rng local = wrng;
      return weighted_sum(t, ops::softmax_rows(logits), local);
    });
  });

  add("bank ops", [](Rng& rng) {
    const std::size_t k = 3, d = 2, n = 4;
    std::vector<Parameter> params{random_param("x", {n, d}, rng),
                                  random_param("w", {k * d, d}, rng),
                                  random_param("xn", {n, d}, rng),
                                  random_param("bias", {k, d}, rng)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Var y = ops::matmul_nt(t.param(p[0]), t.param(p[1]));
      y = ops::add_bank_bias(y, t.param(p[3]));
      Var e = ops::bank_sqdist(y, t.param(p[2]), k);
      Var z = ops::softmax_rows(ops::recip_guard(e, 1e-2));
      Var mix = ops::bank_mix(y, z);
      Rng local = wrng;
      return weighted_sum(t, mix, local);
    });
  });

  add("logsumexp_rows_with", [](Rng& rng) {
    std::vector<Parameter> params{random_param("s", {4, 6}, rng, -2, 2),
                                  random_param("e", {4}, rng, -2, 2)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Rng local = wrng;
      return weighted_sum(
          t, ops::logsumexp_rows_with(t.param(p[0]), t.param(p[1])), local);
    });
  });

  add("slice/concat_cols", [](Rng& rng) {
    std::vector<Parameter> params{random_param("a", {4, 5}, rng)};
    Rng wrng = rng.stream("w");
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      Var a = t.param(p[0]);
      Var left = ops::slice_cols(a, 0, 2);
      Var right = ops::slice_cols(a, 2, 5);
      Var glued = ops::concat_cols({right, left});
      Rng local = wrng;
      return weighted_sum(t, glued, local);
    });
  });

  add("kde_log_gauss", [](Rng& rng) {
    std::vector<Parameter> params{random_param("q", {3, 2}, rng)};
    Tensor anchors = Tensor::uniform({5, 2}, rng, -1, 1);
    Rng wrng = rng.stream("w");
    return check(params, [&, anchors](Tape& t, std::span<Parameter> p) {
      Rng local = wrng;
      return weighted_sum(t, ops::kde_log_gauss(t.param(p[0]), anchors, 0.5),
                          local);
    });
  });

  add("kde_log_vmf", [](Rng& rng) {
    std::vector<Parameter> params{random_param("q", {3, 3}, rng, 0.3, 1.0)};
    Tensor anchors = Tensor::uniform({5, 3}, rng, -1, 1);
    Rng wrng = rng.stream("w");
    return check(params, [&, anchors](Tape& t, std::span<Parameter> p) {
      Var q = ops::row_normalize(t.param(p[0]));
      Rng local = wrng;
      return weighted_sum(t, ops::kde_log_vmf(q, anchors, 4.0), local);
    });
  });

  add("mean_all", [](Rng& rng) {
    std::vector<Parameter> params{random_param("a", {4, 3}, rng)};
    return check(params, [&](Tape& t, std::span<Parameter> p) {
      return ops::mean_all(ops::mul(t.param(p[0]), t.param(p[0])));
    });
  });

  return checks;
}

PrimitiveSweepResult run_primitive_sweep(int rounds, std::uint64_t seed) {
  PrimitiveSweepResult out;
  auto checks = primitive_checks();
  Rng root(seed);
  for (const auto& c : checks) {
    for (int round = 0; round < rounds; ++round) {
      Rng rng = root.stream(c.name).stream(static_cast<std::uint64_t>(round));
      GradCheckResult r = c.run(rng);
      if (r.max_rel_error > out.worst_rel) {
        out.worst_rel = r.max_rel_error;
        out.worst_case = c.name + " round " + std::to_string(round) + " at " +
                         r.worst_entry;
      }
      if (!r.passed) out.passed = false;
    }
  }
  return out;
}

}  // namespace dcl::testing
