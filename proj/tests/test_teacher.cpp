#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "dd/eval.hpp"
#include "dd/neural_teacher.hpp"
#include "dd/teacher.hpp"

using namespace dd;

namespace {

// The two-sample toy set: one sequence repeating token 1, one repeating
// token 2.
std::vector<TokenSeq> two_sample_dataset() {
    return {TokenSeq{{1, 1}, std::nullopt}, TokenSeq{{2, 2}, std::nullopt}};
}

}  // namespace

TEST_CASE("tabular: two-sample toy conditionals") {
    TabularTeacher teacher = fit_tabular(two_sample_dataset(), 2, 0.0);
    TokenSeq empty;
    auto root = teacher.next_dist(empty);
    CHECK(root.probs[0] == doctest::Approx(0.5));
    CHECK(root.probs[1] == doctest::Approx(0.5));

    TokenSeq after1{{1}, std::nullopt};
    auto d1 = teacher.next_dist(after1);
    CHECK(d1.probs[0] == doctest::Approx(1.0));
    CHECK(d1.probs[1] == doctest::Approx(0.0));

    TokenSeq after2{{2}, std::nullopt};
    auto d2 = teacher.next_dist(after2);
    CHECK(d2.probs[0] == doctest::Approx(0.0));
    CHECK(d2.probs[1] == doctest::Approx(1.0));
}

TEST_CASE("tabular: additive smoothing formula") {
    // One observation of token 1 out of one sequence of length 1, V=2,
    // alpha=1: (1+1)/(1+2) and (0+1)/(1+2).
    std::vector<TokenSeq> data{TokenSeq{{1}, std::nullopt}};
    TabularTeacher teacher = fit_tabular(data, 2, 1.0);
    auto d = teacher.next_dist(TokenSeq{});
    CHECK(d.probs[0] == doctest::Approx(2.0 / 3.0));
    CHECK(d.probs[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("tabular: repeated single sequence is sampled with probability 1 at alpha=0") {
    std::vector<TokenSeq> data(5, TokenSeq{{2, 1, 2}, std::nullopt});
    TabularTeacher teacher = fit_tabular(data, 3, 0.0);
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        TokenSeq s = ar_sample(teacher, std::nullopt, rng);
        CHECK(s.ids == std::vector<std::uint32_t>{2, 1, 2});
    }
}

TEST_CASE("tabular: empty dataset rejected") {
    CHECK_THROWS_AS(fit_tabular({}, 2, 0.0), DomainError);
}

TEST_CASE("tabular: prefix too long rejected; distributions always normalize") {
    TabularTeacher teacher = fit_tabular(two_sample_dataset(), 2, 0.5);
    TokenSeq full{{1, 1}, std::nullopt};
    CHECK_THROWS_AS(teacher.next_dist(full), DomainError);

    TokenSeq unseen{{2}, std::nullopt};
    auto d = teacher.next_dist(unseen);
    double sum = d.probs[0] + d.probs[1];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_NOTHROW(d.validate());
}

TEST_CASE("tabular: chain-rule consistency at alpha=0") {
    // Product of next_dist along each dataset sequence equals its
    // empirical joint frequency.
    std::vector<TokenSeq> data{
        TokenSeq{{1, 2, 1}, std::nullopt}, TokenSeq{{1, 2, 1}, std::nullopt},
        TokenSeq{{2, 1, 1}, std::nullopt}, TokenSeq{{1, 1, 2}, std::nullopt}};
    TabularTeacher teacher = fit_tabular(data, 2, 0.0);
    std::map<std::vector<std::uint32_t>, double> freq;
    for (const auto& seq : data) freq[seq.ids] += 1.0 / data.size();
    for (const auto& [ids, expected] : freq) {
        TokenSeq prefix;
        double product = 1.0;
        for (std::uint32_t id : ids) {
            product *= teacher.next_dist(prefix).probs[id - 1];
            prefix.ids.push_back(id);
        }
        CHECK(product == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("ar_sample: empirical joint matches the exact chain-rule joint") {
    TabularTeacher teacher = fit_tabular(two_sample_dataset(), 2, 0.0);
    JointDist exact = exact_joint(teacher, std::nullopt);
    Rng rng(31);
    JointDist empirical = empirical_joint(
        [&]() { return ar_sample(teacher, std::nullopt, rng); }, 100000, 2);
    CHECK(tv_distance(exact, empirical) < 0.01);
}

TEST_CASE("ar_sample: n=4 V=4 chain teacher joint matches enumeration at 1e5 draws") {
    TabularTeacher teacher(4, 4, 0.0);
    std::vector<std::uint32_t> prefix;
    std::function<void()> fill = [&]() {
        if (prefix.size() >= 4) return;
        for (std::uint32_t k = 1; k <= 4; ++k) {
            double w = prefix.empty() ? 1.0 : (k == prefix.back() ? 6.0 : 1.0);
            teacher.add_count(std::nullopt, prefix, k, w);
        }
        for (std::uint32_t k = 1; k <= 4; ++k) {
            prefix.push_back(k);
            fill();
            prefix.pop_back();
        }
    };
    fill();
    JointDist exact = exact_joint(teacher, std::nullopt);
    Rng rng(71);
    JointDist estimate = empirical_joint(
        [&]() { return ar_sample(teacher, std::nullopt, rng); }, 100000, 4);
    CHECK(tv_distance(exact, estimate) <= 0.02);
}

TEST_CASE("ar_sample: fixed seed reproduces the sequence; purity of next_dist") {
    std::vector<TokenSeq> data{TokenSeq{{1, 2, 3}, std::nullopt},
                               TokenSeq{{3, 2, 1}, std::nullopt},
                               TokenSeq{{2, 2, 2}, std::nullopt}};
    TabularTeacher teacher = fit_tabular(data, 3, 0.3);
    Rng a(99), b(99);
    CHECK(ar_sample(teacher, std::nullopt, a).ids == ar_sample(teacher, std::nullopt, b).ids);

    TokenSeq prefix{{2}, std::nullopt};
    auto d1 = teacher.next_dist(prefix);
    auto d2 = teacher.next_dist(prefix);
    CHECK(d1.probs == d2.probs);
}

TEST_CASE("teacher checkpoint: tabular round-trip preserves behavior and fingerprint") {
    TabularTeacher teacher = fit_tabular(two_sample_dataset(), 2, 0.25);
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    teacher.save(buf);
    auto loaded = load_teacher(buf);
    REQUIRE(loaded != nullptr);
    CHECK(loaded->kind() == TeacherKind::tabular);
    CHECK(loaded->seq_len() == 2);
    CHECK(loaded->vocab() == 2);
    CHECK(loaded->fingerprint() == teacher.fingerprint());
    TokenSeq prefix{{1}, std::nullopt};
    CHECK(loaded->next_dist(prefix).probs == teacher.next_dist(prefix).probs);
}

TEST_CASE("neural teacher: learns exact conditionals of a small tabular source") {
    // Ground truth: markov-style teacher on n=3, V=4 with known rows.
    TabularTeacher truth(3, 4, 0.0);
    std::vector<std::uint32_t> empty;
    for (std::uint32_t k = 1; k <= 4; ++k) truth.add_count(std::nullopt, empty, k, 1.0);
    Rng data_rng(7);
    // Make conditionals depend strongly on the previous token.
    for (std::uint32_t prev = 1; prev <= 4; ++prev) {
        for (std::uint32_t k = 1; k <= 4; ++k) {
            double w = (k == prev) ? 7.0 : 1.0;
            std::vector<std::uint32_t> p1{prev};
            truth.add_count(std::nullopt, p1, k, w);
            for (std::uint32_t prev2 = 1; prev2 <= 4; ++prev2) {
                std::vector<std::uint32_t> p2{prev2, prev};
                truth.add_count(std::nullopt, p2, k, w);
            }
        }
    }

    std::vector<TokenSeq> dataset;
    Rng sample_rng(11);
    for (int i = 0; i < 4000; ++i) dataset.push_back(ar_sample(truth, std::nullopt, sample_rng));

    TeacherTrainConfig cfg;
    cfg.arch.width = 32;
    cfg.arch.layers = 2;
    cfg.epochs = 60;
    cfg.batch = 64;
    cfg.lr = 2e-3;
    cfg.seed = 3;
    TeacherTrainLog log;
    NeuralTeacher student_of_truth = train_neural_teacher(dataset, 4, cfg, &log);

    REQUIRE(log.train_loss.size() == cfg.epochs);
    CHECK(log.train_loss.back() < log.train_loss.front());

    // Held-out per-token KL between true conditionals and the learned
    // ones, averaged over prefixes drawn from the truth.
    Rng holdout_rng(13);
    double kl_sum = 0.0;
    int kl_count = 0;
    for (int i = 0; i < 50; ++i) {
        TokenSeq seq = ar_sample(truth, std::nullopt, holdout_rng);
        TokenSeq prefix;
        for (std::uint32_t t = 0; t < 3; ++t) {
            auto p = truth.next_dist(prefix);
            auto q = student_of_truth.next_dist(prefix);
            double kl = 0.0;
            for (std::uint32_t k = 0; k < 4; ++k)
                if (p.probs[k] > 0) kl += p.probs[k] * std::log(p.probs[k] / q.probs[k]);
            kl_sum += kl;
            ++kl_count;
            prefix.ids.push_back(seq.ids[t]);
        }
    }
    CHECK(kl_sum / kl_count <= 0.05);
}

TEST_CASE("neural teacher: memorizes a zero-entropy dataset") {
    std::vector<TokenSeq> data(64, TokenSeq{{3, 1, 2}, std::nullopt});
    TeacherTrainConfig cfg;
    cfg.arch.width = 24;
    cfg.arch.layers = 1;
    cfg.epochs = 40;
    cfg.batch = 16;
    cfg.lr = 3e-3;
    NeuralTeacher teacher = train_neural_teacher(data, 3, cfg);
    TokenSeq prefix;
    std::vector<std::uint32_t> want{3, 1, 2};
    for (std::uint32_t t = 0; t < 3; ++t) {
        auto d = teacher.next_dist(prefix);
        CHECK(d.probs[want[t] - 1] >= 0.99);
        prefix.ids.push_back(want[t]);
    }
}

TEST_CASE("neural teacher: checkpoint round-trip preserves outputs") {
    std::vector<TokenSeq> data{TokenSeq{{1, 2}, std::nullopt}, TokenSeq{{2, 1}, std::nullopt}};
    TeacherTrainConfig cfg;
    cfg.arch.width = 16;
    cfg.arch.layers = 1;
    cfg.epochs = 2;
    cfg.batch = 2;
    NeuralTeacher teacher = train_neural_teacher(data, 2, cfg);
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    teacher.save(buf);
    auto loaded = load_teacher(buf);
    CHECK(loaded->kind() == TeacherKind::neural);
    TokenSeq prefix{{1}, std::nullopt};
    auto a = teacher.next_dist(prefix);
    auto b = loaded->next_dist(prefix);
    for (std::size_t k = 0; k < a.probs.size(); ++k)
        CHECK(a.probs[k] == doctest::Approx(b.probs[k]).epsilon(1e-5));
}

TEST_CASE("neural teacher: guidance hook mixes conditional and null logits") {
    std::vector<TokenSeq> data{TokenSeq{{1, 2}, 0}, TokenSeq{{2, 1}, 0}};
    TeacherTrainConfig cfg;
    cfg.arch.width = 16;
    cfg.arch.layers = 1;
    cfg.epochs = 1;
    cfg.batch = 2;
    NeuralTeacher teacher = train_neural_teacher(data, 2, cfg);
    TokenSeq prefix;
    prefix.condition = 0;
    auto plain = teacher.next_dist(prefix);
    teacher.set_guidance(2.0, true);
    auto guided = teacher.next_dist(prefix);
    CHECK_NOTHROW(guided.validate());
    // Scale 1 must reduce to the unguided distribution.
    teacher.set_guidance(1.0, true);
    auto unit = teacher.next_dist(prefix);
    for (std::size_t k = 0; k < plain.probs.size(); ++k)
        CHECK(unit.probs[k] == doctest::Approx(plain.probs[k]).epsilon(1e-9));
}
