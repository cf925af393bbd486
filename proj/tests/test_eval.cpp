#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dd/eval.hpp"
#include "dd/teacher.hpp"

using namespace dd;

namespace {

std::vector<TokenSeq> two_sample_dataset() {
    return {TokenSeq{{1, 1}, std::nullopt}, TokenSeq{{2, 2}, std::nullopt}};
}

JointDist make_joint(std::uint32_t n, std::uint32_t vocab,
                     const std::vector<std::pair<std::vector<std::uint32_t>, double>>& mass) {
    JointDist joint(n, vocab);
    for (const auto& [ids, p] : mass) joint.add(ids, p);
    return joint;
}

}  // namespace

TEST_CASE("exact_joint: point mass for a deterministic teacher") {
    std::vector<TokenSeq> data(3, TokenSeq{{2, 2}, std::nullopt});
    TabularTeacher teacher = fit_tabular(data, 2, 0.0);
    JointDist joint = exact_joint(teacher, std::nullopt);
    CHECK(joint.prob({2, 2}) == doctest::Approx(1.0));
    CHECK(joint.prob({1, 1}) == doctest::Approx(0.0));
    CHECK(joint.total_mass() == doctest::Approx(1.0));
}

TEST_CASE("exact_joint: two-sample toy gives half mass on each diagonal outcome") {
    TabularTeacher teacher = fit_tabular(two_sample_dataset(), 2, 0.0);
    JointDist joint = exact_joint(teacher, std::nullopt);
    CHECK(joint.prob({1, 1}) == doctest::Approx(0.5));
    CHECK(joint.prob({2, 2}) == doctest::Approx(0.5));
    CHECK(joint.prob({1, 2}) == doctest::Approx(0.0));
    CHECK(joint.prob({2, 1}) == doctest::Approx(0.0));
}

TEST_CASE("exact_joint: uniform teacher gives 1/V^n everywhere") {
    TabularTeacher teacher(2, 2, 1.0);  // no counts + smoothing = uniform
    JointDist joint = exact_joint(teacher, std::nullopt);
    for (std::uint32_t a = 1; a <= 2; ++a)
        for (std::uint32_t b = 1; b <= 2; ++b)
            CHECK(joint.prob({a, b}) == doctest::Approx(0.25));
}

TEST_CASE("exact_joint: marginals agree with next_dist at every prefix") {
    std::vector<TokenSeq> data{TokenSeq{{1, 2, 1}, std::nullopt},
                               TokenSeq{{2, 1, 2}, std::nullopt},
                               TokenSeq{{1, 1, 1}, std::nullopt}};
    TabularTeacher teacher = fit_tabular(data, 2, 0.4);
    JointDist joint = exact_joint(teacher, std::nullopt);
    CHECK(joint.total_mass() == doctest::Approx(1.0).epsilon(1e-12));

    // Position-1 marginal equals next_dist on the empty prefix.
    auto marginals = joint.position_marginals();
    auto root = teacher.next_dist(TokenSeq{});
    CHECK(marginals[0][0] == doctest::Approx(root.probs[0]).epsilon(1e-12));
    CHECK(marginals[0][1] == doctest::Approx(root.probs[1]).epsilon(1e-12));

    // Conditional given prefix (1): ratio of joint slices.
    auto d1 = teacher.next_dist(TokenSeq{{1}, std::nullopt});
    double mass_1 = 0.0, mass_11 = 0.0;
    joint.for_each([&](const std::vector<std::uint32_t>& ids, double p) {
        if (ids[0] == 1) mass_1 += p;
        if (ids[0] == 1 && ids[1] == 1) mass_11 += p;
    });
    CHECK(mass_11 / mass_1 == doctest::Approx(d1.probs[0]).epsilon(1e-12));
}

TEST_CASE("empirical_joint: edge cases") {
    TokenSeq fixed{{1, 2}, std::nullopt};
    JointDist one = empirical_joint([&]() { return fixed; }, 1, 2);
    CHECK(one.prob({1, 2}) == doctest::Approx(1.0));

    JointDist many = empirical_joint([&]() { return fixed; }, 5000, 2);
    CHECK(many.prob({1, 2}) == doctest::Approx(1.0));
    CHECK(many.prob({2, 1}) == doctest::Approx(0.0));

    CHECK_THROWS_AS(empirical_joint([&]() { return fixed; }, 0, 2), DomainError);
}

TEST_CASE("empirical_joint: converges to the exact joint") {
    TabularTeacher teacher = fit_tabular(two_sample_dataset(), 2, 0.0);
    JointDist exact = exact_joint(teacher, std::nullopt);
    Rng rng(5);
    JointDist estimate = empirical_joint(
        [&]() {
            // Re-sample from the exact joint itself via the chain rule.
            return ar_sample(teacher, std::nullopt, rng);
        },
        1000000, 2);
    CHECK(tv_distance(exact, estimate) <= 0.005);
}

TEST_CASE("tv_distance: identical, disjoint, and the half-overlap case") {
    auto diag = make_joint(2, 2, {{{1, 1}, 0.5}, {{2, 2}, 0.5}});
    auto uniform = make_joint(2, 2, {{{1, 1}, 0.25}, {{1, 2}, 0.25}, {{2, 1}, 0.25},
                                     {{2, 2}, 0.25}});
    auto corner = make_joint(2, 2, {{{1, 2}, 1.0}});
    auto other_corner = make_joint(2, 2, {{{2, 1}, 1.0}});

    CHECK(tv_distance(diag, diag) == doctest::Approx(0.0));
    CHECK(tv_distance(corner, other_corner) == doctest::Approx(1.0));
    CHECK(tv_distance(uniform, diag) == doctest::Approx(0.5));
}

TEST_CASE("tv_distance: metric properties on random triples") {
    Rng rng(17);
    auto random_joint = [&](std::uint32_t salt) {
        (void)salt;
        JointDist j(2, 3);
        double total = 0.0;
        std::vector<double> mass(9);
        for (double& m : mass) {
            m = rng.next_double();
            total += m;
        }
        int idx = 0;
        for (std::uint32_t a = 1; a <= 3; ++a)
            for (std::uint32_t b = 1; b <= 3; ++b) j.add({a, b}, mass[idx++] / total);
        return j;
    };
    for (int trial = 0; trial < 20; ++trial) {
        JointDist a = random_joint(1), b = random_joint(2), c = random_joint(3);
        double ab = tv_distance(a, b);
        double ba = tv_distance(b, a);
        double ac = tv_distance(a, c);
        double cb = tv_distance(c, b);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0 + 1e-12);
        CHECK(ab <= ac + cb + 1e-12);
    }
}

TEST_CASE("pairwise mutual information: product distributions score zero") {
    auto uniform = make_joint(2, 2, {{{1, 1}, 0.25}, {{1, 2}, 0.25}, {{2, 1}, 0.25},
                                     {{2, 2}, 0.25}});
    CHECK(mean_pairwise_mutual_information(uniform) == doctest::Approx(0.0).epsilon(1e-12));

    auto diag = make_joint(2, 2, {{{1, 1}, 0.5}, {{2, 2}, 0.5}});
    CHECK(mean_pairwise_mutual_information(diag) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("confidence halfwidth: formula") {
    CHECK(tv_confidence_halfwidth(2, 2, 100) == doctest::Approx(0.5 * std::sqrt(4.0 / 100.0)));
}

TEST_CASE("evaluate_systems: teacher against itself sits at the noise floor") {
    TabularTeacher teacher = fit_tabular(two_sample_dataset(), 2, 0.0);
    Rng rng(23);
    std::vector<SystemUnderTest> systems;
    systems.push_back({"teacher", teacher.seq_len(),
                       [&]() { return ar_sample(teacher, std::nullopt, rng); }});
    EvalReport report = evaluate_systems(teacher, std::nullopt, systems, 50000);
    REQUIRE(report.systems.size() == 1);
    CHECK(report.systems[0].tv_joint < 3 * report.confidence_halfwidth);
    CHECK(report.systems[0].speedup == doctest::Approx(1.0));

    std::ostringstream kv, csv;
    report.write_kv(kv);
    report.write_csv(csv);
    CHECK(kv.str().find("system=teacher") != std::string::npos);
    CHECK(csv.str().rfind("system,steps,tv_joint", 0) == 0);
}
