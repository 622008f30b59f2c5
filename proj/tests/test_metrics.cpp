#include <doctest.h>

#include <cmath>

#include "pex/bitmodels.hpp"
#include "pex/explainers.hpp"
#include "pex/metrics.hpp"
#include "pex/unified.hpp"

using namespace pex;
using namespace pex::metrics;

TEST_CASE("estimate_coverage") {
  perturb::PerturbPolicy policy;  // bernoulli(0.5)

  SUBCASE("single positive literal covers half the space") {
    Rng rng = rng_fork(1, 0);
    auto e = estimate_coverage(make_rule({0}, {}, 1), 3, policy, 20000, rng);
    CHECK(e.value == doctest::Approx(0.5).epsilon(0.03));
    CHECK(e.ci_halfwidth == doctest::Approx(1.96 * std::sqrt(e.value * (1 - e.value) / 20000)));
  }

  SUBCASE("the empty rule covers everything exactly") {
    Rng rng = rng_fork(2, 0);
    auto e = estimate_coverage(make_rule({}, {}, 1), 4, policy, 500, rng);
    CHECK(e.value == 1.0);
  }

  SUBCASE("two literals cross-checked against enumeration") {
    Rng rng = rng_fork(3, 0);
    const Rule g = make_rule({0, 1}, {}, 1);
    auto e = estimate_coverage(g, 5, policy, 20000, rng);
    auto exact = brute_force_rule_stats(g, nullptr, 5);
    CHECK(exact.coverage == doctest::Approx(0.25));
    CHECK(e.value == doctest::Approx(exact.coverage).epsilon(0.06));
  }
}

TEST_CASE("estimate_precision") {
  SUBCASE("half of the covered region keeps the label") {
    // f = z1 AND z2, rule fixes only z1: precision 0.5 for label 1.
    auto handle = bitmodels::planted_conjunction({1, 2}, "prec");
    auto ctx = bitmodels::make_context(4, handle, 10);
    Rng rng = rng_fork(10, 1);
    auto e = estimate_precision(make_rule({1}, {}, 1), 1, ctx, 20000, rng);
    CHECK(e.value == doctest::Approx(0.5).epsilon(0.03));

    auto exact = brute_force_rule_stats(
        make_rule({1}, {}, 1),
        [](const BitVector& z) { return z[1] && z[2] ? 1 : 0; }, 4);
    CHECK(exact.precision == doctest::Approx(0.5));
  }

  SUBCASE("the model's own rule is perfectly precise") {
    auto handle = bitmodels::planted_conjunction({0, 3}, "prec-own");
    auto ctx = bitmodels::make_context(5, handle, 11);
    Rng rng = rng_fork(11, 1);
    auto e = estimate_precision(make_rule({0, 3}, {}, 1), 1, ctx, 2000, rng);
    CHECK(e.value == 1.0);
  }

  SUBCASE("a label the model never produces scores zero") {
    auto handle = bitmodels::make_handle([](const BitVector&) { return 1; },
                                         std::nullopt, "const-prec");
    auto ctx = bitmodels::make_context(4, handle, 12);
    Rng rng = rng_fork(12, 1);
    auto e = estimate_precision(make_rule({0}, {}, 7), 7, ctx, 1000, rng);
    CHECK(e.value == 0.0);
  }

  SUBCASE("negated literals are forced off during sampling") {
    auto handle = bitmodels::planted_conjunction({1}, "prec-neg");
    auto ctx = bitmodels::make_context(3, handle, 13);
    Rng rng = rng_fork(13, 1);
    // Rule {z1=1, z0=0} implies label 1 with certainty under f = z1.
    auto e = estimate_precision(make_rule({1}, {0}, 1), 1, ctx, 2000, rng);
    CHECK(e.value == 1.0);
  }
}

TEST_CASE("aopc_curve") {
  SUBCASE("direct differences") {
    // p(y|x)=0.9, p(y|x^(20))=0.7, p(y|x^(40))=0.5 -> AOPC 0.2 and 0.4.
    // Model: p falls by 0.2 per masked positive predicate.
    const std::size_t d = 5;
    auto p1 = [d](const BitVector& z) {
      double p = 0.9 - 0.2 * static_cast<double>(d - z.popcount());
      return std::min(1.0, std::max(0.0, p));
    };
    auto handle = bitmodels::make_handle(
        [p1](const BitVector& z) { return p1(z) >= 0.5 ? 1 : 0; }, p1, "aopc");
    auto ctx = bitmodels::make_context(d, handle, 20);
    Attribution attr;
    attr.weights = {0.5, 0.4, 0.3, 0.2, 0.1};  // all positive, ranked 0..4
    attr.label = 1;
    auto curve = aopc_curve(ctx, attr, {20, 40});
    REQUIRE(curve.size() == 2);
    CHECK(curve[0].first == 20);
    CHECK(curve[0].second == doctest::Approx(0.2));  // one predicate masked
    CHECK(curve[1].second == doctest::Approx(0.4));  // two masked
    CHECK(aopc_mean(curve) == doctest::Approx(0.3));
  }

  SUBCASE("k = 0 is exactly zero") {
    auto handle = bitmodels::make_handle(
        [](const BitVector& z) { return z[0] ? 1 : 0; },
        [](const BitVector& z) { return z[0] ? 0.8 : 0.2; }, "aopc0");
    auto ctx = bitmodels::make_context(3, handle, 21);
    Attribution attr;
    attr.weights = {0.3, 0.2, 0.1};
    auto curve = aopc_curve(ctx, attr, {0});
    CHECK(curve[0].second == 0.0);
  }

  SUBCASE("probability-free backends are unsupported") {
    auto handle = bitmodels::make_handle([](const BitVector&) { return 1; },
                                         std::nullopt, "no-prob");
    auto ctx = bitmodels::make_context(3, handle, 22);
    Attribution attr;
    attr.weights = {0.1, 0.1, 0.1};
    CHECK_THROWS_AS(aopc_curve(ctx, attr, {10, 20}), UnsupportedError);
  }

  SUBCASE("constant models have an identically zero curve") {
    auto handle = bitmodels::make_handle(
        [](const BitVector&) { return 1; },
        [](const BitVector&) { return 0.75; }, "const-aopc");
    auto ctx = bitmodels::make_context(4, handle, 23);
    Attribution attr;
    attr.weights = {0.4, 0.3, 0.2, 0.1};
    for (const auto& [k, v] : aopc_curve(ctx, attr, kDefaultKGrid))
      CHECK(v == doctest::Approx(0.0));
  }
}

TEST_CASE("accuracy_a") {
  SUBCASE("invariant model scores one") {
    auto handle = bitmodels::make_handle([](const BitVector&) { return 1; },
                                         std::nullopt, "inv");
    auto ctx = bitmodels::make_context(4, handle, 30);
    Attribution attr;
    attr.weights = {0.4, 0.3, 0.2, 0.1};
    CHECK(accuracy_a(ctx, attr, kDefaultKGrid) == 1.0);
  }

  SUBCASE("always-flipping model scores zero") {
    auto handle = bitmodels::make_handle(
        [](const BitVector& z) { return z.popcount() == z.size() ? 1 : 0; },
        std::nullopt, "flip");
    auto ctx = bitmodels::make_context(4, handle, 31);
    Attribution attr;
    attr.weights = {0.4, 0.3, 0.2, 0.1};
    // Every k here masks at least one predicate (floor(k*4/100) >= 1).
    CHECK(accuracy_a(ctx, attr, {25, 50, 75, 100}) == 0.0);
  }

  SUBCASE("the worked two-predicate case is exactly zero") {
    auto handle = bitmodels::make_handle(
        [](const BitVector& z) { return z[0] ? 1 : 0; },
        [](const BitVector& z) { return z[0] ? 1.0 : 0.0; }, "worked");
    auto ctx = bitmodels::make_context(2, handle, 32);
    Attribution attr;
    attr.weights = {1.0, 0.1};  // ranks bit 0 first
    CHECK(accuracy_a(ctx, attr, {50, 100}) == 0.0);
  }

  SUBCASE("all-zero weights never mask anything") {
    auto handle = bitmodels::make_handle(
        [](const BitVector& z) { return z[0] ? 1 : 0; }, std::nullopt, "zero");
    auto ctx = bitmodels::make_context(3, handle, 33);
    Attribution attr;
    attr.weights = {0.0, 0.0, 0.0};
    CHECK(accuracy_a(ctx, attr, kDefaultKGrid) == 1.0);
  }
}

TEST_CASE("surrogate_fidelity") {
  SUBCASE("the model as its own surrogate is perfect") {
    auto handle = bitmodels::planted_conjunction({0, 1}, "self");
    auto ctx = bitmodels::make_context(5, handle, 40);
    Rng rng = rng_fork(40, 2);
    auto self = [](const BitVector& z) { return z[0] && z[1] ? 1 : 0; };
    CHECK(surrogate_fidelity(self, ctx, 2000, rng) == 1.0);
  }

  SUBCASE("a constant surrogate sits at chance level") {
    auto handle = bitmodels::make_handle(
        [](const BitVector& z) { return z[0] ? 1 : 0; }, std::nullopt, "coin");
    auto ctx = bitmodels::make_context(6, handle, 41);
    Rng rng = rng_fork(41, 2);
    auto constant = [](const BitVector&) { return 1; };
    CHECK(surrogate_fidelity(constant, ctx, 20000, rng) ==
          doctest::Approx(0.5).epsilon(0.03));
  }

  SUBCASE("exact LORE+KSHAP on a planted rule reaches exhaustive fidelity 1") {
    const std::size_t d = 6;
    auto handle = bitmodels::planted_conjunction({1, 2}, "planted-uni");
    auto ctx = bitmodels::make_context(d, handle, 42);

    explainers::LoreConfig lore_config;
    lore_config.population = 200;
    auto rules = explainers::explain_lore(ctx, lore_config);
    auto attr = explainers::explain_kshap(ctx, explainers::ShapConfig{});
    auto u = unified::build_unified(rules, attr, 0.5);

    std::size_t agree = 0;
    for (std::uint64_t mask = 0; mask < (1u << d); ++mask) {
      auto z = BitVector::from_mask(d, mask);
      const int truth = z[1] && z[2] ? 1 : 0;
      agree += unified::unified_predict(u, z) == truth;
    }
    CHECK(agree == (1u << d));

    Rng rng = rng_fork(42, 2);
    CHECK(surrogate_fidelity(label_surrogate(u), ctx, 2000, rng) == 1.0);
  }

  SUBCASE("agreement reduction for multiclass tasks") {
    auto handle = bitmodels::planted_conjunction({0}, "agree");
    auto ctx = bitmodels::make_context(4, handle, 43);
    Rng rng = rng_fork(43, 2);
    UnifiedExplanation u;
    u.rules = RuleSet{make_rule({0}, {}, 1), {make_rule({}, {0}, 0)}};
    u.attribution.weights = {0.6, 0.0, 0.0, 0.0};
    CHECK(surrogate_fidelity_agreement(agreement_surrogate(u, 1), ctx, 2000,
                                       rng) == 1.0);
  }
}

TEST_CASE("exact_shapley_oracle") {
  SUBCASE("OR of two bits") {
    auto phi = exact_shapley_oracle(
        [](const BitVector& z) { return z[0] || z[1] ? 1.0 : 0.0; }, 2);
    CHECK(phi[0] == doctest::Approx(0.5));
    CHECK(phi[1] == doctest::Approx(0.5));
  }

  SUBCASE("additivity") {
    const std::vector<double> a{0.3, -0.1, 0.2};
    auto phi = exact_shapley_oracle(
        [&a](const BitVector& z) {
          double v = 1.0;
          for (std::size_t i = 0; i < a.size(); ++i)
            if (z[i]) v += a[i];
          return v;
        },
        3);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(phi[i] == doctest::Approx(a[i]).epsilon(1e-12));
  }

  SUBCASE("symmetric players receive equal credit") {
    auto phi = exact_shapley_oracle(
        [](const BitVector& z) {
          const int s = static_cast<int>(z[0]) + static_cast<int>(z[1]);
          return s == 2 ? 1.0 : 0.3 * s;
        },
        2);
    CHECK(phi[0] == doctest::Approx(phi[1]));
  }

  SUBCASE("budget guard") {
    CHECK_THROWS_AS(
        exact_shapley_oracle([](const BitVector&) { return 0.0; }, 16),
        BudgetError);
  }
}

TEST_CASE("brute_force_rule_stats") {
  SUBCASE("empty rule") {
    auto stats = brute_force_rule_stats(make_rule({}, {}, 1), nullptr, 6);
    CHECK(stats.coverage == 1.0);
  }

  SUBCASE("two positive literals at d = 4") {
    auto stats = brute_force_rule_stats(make_rule({0, 1}, {}, 1), nullptr, 4);
    CHECK(stats.coverage == doctest::Approx(0.25));
  }

  SUBCASE("planted conjunction precision") {
    auto stats = brute_force_rule_stats(
        make_rule({1}, {}, 1),
        [](const BitVector& z) { return z[1] && z[2] ? 1 : 0; }, 4);
    CHECK(stats.precision == doctest::Approx(0.5));
  }

  SUBCASE("budget guard") {
    CHECK_THROWS_AS(brute_force_rule_stats(make_rule({}, {}, 0), nullptr, 21),
                    BudgetError);
  }
}

TEST_CASE("fidelity reports serialize to JSON and CSV") {
  FidelityReport report;
  report.n_samples = 1000;
  report.coverage = Estimate{0.25, 0.01, 1000};
  report.aopc_curve = {{10, 0.05}, {20, 0.125}};
  report.aopc_mean = aopc_mean(report.aopc_curve);
  report.surrogate_accuracy = 0.97;

  auto j = to_json(report);
  CHECK(j["coverage"]["estimate"] == 0.25);
  CHECK(j["aopc"]["curve"][1][1] == 0.125);
  CHECK(j["n_samples"] == 1000);
  CHECK_FALSE(j.contains("precision"));

  CHECK(aopc_csv(report.aopc_curve) == "k,aopc\n10,0.05\n20,0.125\n");
}
