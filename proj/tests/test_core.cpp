#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "dd/codebook.hpp"
#include "dd/io.hpp"
#include "dd/rng.hpp"
#include "dd/sequence.hpp"

using namespace dd;

TEST_CASE("rng: fixed seed reproduces the stream bit-exactly") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42), d(42);
    for (int i = 0; i < 1000; ++i) {
        CHECK(c.next_gaussian() == d.next_gaussian());
    }
}

TEST_CASE("rng: gaussian moments are sane") {
    Rng rng(7);
    double sum = 0.0, sum2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double x = rng.next_gaussian();
        sum += x;
        sum2 += x * x;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sum2 / n - 1.0) < 0.02);
}

TEST_CASE("rng: split_seed streams do not collide for nearby indices") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(split_seed(123, i));
    CHECK(seen.size() == 10000);
}

TEST_CASE("rng: categorical respects probabilities") {
    Rng rng(3);
    std::vector<double> p{0.2, 0.5, 0.3};
    std::vector<int> counts(3, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[rng.next_categorical(p) - 1];
    for (int j = 0; j < 3; ++j)
        CHECK(std::abs(static_cast<double>(counts[j]) / n - p[j]) < 0.01);
}

TEST_CASE("codebook: rejects duplicates and bad shapes") {
    CHECK_THROWS_AS(Codebook(2, {1.f, 2.f, 1.f, 2.f}), DomainError);
    CHECK_THROWS_AS(Codebook(2, {1.f, 2.f, 3.f}), DomainError);
    CHECK_THROWS_AS(Codebook(1, {1.f, std::nanf("")}), DomainError);
    CHECK_NOTHROW(Codebook(2, {1.f, 2.f, 1.f, 3.f}));
}

TEST_CASE("codebook: file round-trip is bit-exact") {
    Codebook cb = Codebook::random(5, 3, 99);
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    cb.save(buf);
    std::string first = buf.str();
    Codebook back = Codebook::load(buf);
    CHECK(back.size() == cb.size());
    CHECK(back.dim() == cb.dim());
    CHECK(back.raw() == cb.raw());

    std::stringstream buf2(std::ios::in | std::ios::out | std::ios::binary);
    back.save(buf2);
    CHECK(buf2.str() == first);
}

TEST_CASE("codebook: load rejects wrong magic") {
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    buf << "NOPExxxxxxxxxxxxxxxx";
    CHECK_THROWS_AS(Codebook::load(buf), IoError);
}

TEST_CASE("nearest_token: strictly closer entry wins") {
    Codebook cb(1, {-1.f, 1.f});
    CHECK(nearest_token(std::vector<double>{0.9}, cb) == 2);
    CHECK(nearest_token(std::vector<double>{-0.9}, cb) == 1);
}

TEST_CASE("nearest_token: exact tie breaks to the smallest index, both orderings") {
    Codebook ab(1, {-1.f, 1.f});
    Codebook ba(1, {1.f, -1.f});
    // x = 0 is equidistant in both layouts.
    CHECK(nearest_token(std::vector<double>{0.0}, ab) == 1);
    CHECK(nearest_token(std::vector<double>{0.0}, ba) == 1);
}

TEST_CASE("nearest_token: singleton codebook maps everything to it") {
    Codebook cb(2, {0.5f, -0.25f});
    CHECK(nearest_token(std::vector<double>{100.0, -3.0}, cb) == 1);
    CHECK(nearest_token(std::vector<double>{0.0, 0.0}, cb) == 1);
}

TEST_CASE("nearest_token: projection fixes every codebook atom") {
    Codebook cb = Codebook::random(17, 4, 5);
    for (std::uint32_t j = 1; j <= cb.size(); ++j) {
        auto e = cb.entry(j);
        std::vector<double> x(e.begin(), e.end());
        CHECK(nearest_token(x, cb) == j);
    }
}

TEST_CASE("slice_head: inclusive head semantics") {
    TokenSeq x{{10, 20, 30}, std::nullopt};
    CHECK(slice_head(x, 2).ids == std::vector<std::uint32_t>{10, 20});
    CHECK(slice_head(x, 0).ids.empty());
    CHECK(slice_head(x, 3).ids == std::vector<std::uint32_t>{10, 20, 30});
    CHECK_THROWS_AS(slice_head(x, 4), DomainError);
}

TEST_CASE("slice_head/slice_tail: noise sequences") {
    NoiseSeq e = NoiseSeq::generate(11, 4, 2);
    NoiseSeq head = slice_head(e, 2);
    CHECK(head.size() == 2);
    CHECK(head.vec(1)[0] == e.vec(1)[0]);
    CHECK(head.vec(2)[1] == e.vec(2)[1]);

    NoiseSeq tail = slice_tail(e, 3);
    CHECK(tail.size() == 2);
    CHECK(tail.vec(1)[0] == e.vec(3)[0]);
    CHECK(tail.vec(2)[1] == e.vec(4)[1]);

    CHECK(slice_tail(e, 5).size() == 0);
    CHECK_THROWS_AS(slice_tail(e, 6), DomainError);
}

TEST_CASE("noise: regenerating from the stored seed is bit-exact") {
    NoiseSeq a = NoiseSeq::generate(777, 8, 3);
    REQUIRE(a.seed().has_value());
    NoiseSeq b = NoiseSeq::generate(*a.seed(), 8, 3);
    CHECK(a.raw() == b.raw());
}

TEST_CASE("concat_mixed: reproduces the trajectory layout") {
    TokenSeq head{{1, 2}, std::nullopt};
    NoiseSeq tail = NoiseSeq::generate(5, 2, 1);
    TrajectoryPoint xt = concat_mixed(head, tail, 3);
    CHECK(xt.size() == 4);
    CHECK(xt.t == 3);
    CHECK(xt.prefix.ids == std::vector<std::uint32_t>{1, 2});
    CHECK(xt.suffix.size() == 2);
}

TEST_CASE("concat_mixed: endpoints") {
    NoiseSeq all = NoiseSeq::generate(9, 3, 1);
    TrajectoryPoint pure_noise = concat_mixed(TokenSeq{}, all, 1);
    CHECK(pure_noise.size() == 3);
    CHECK(pure_noise.prefix.size() == 0);

    TokenSeq data{{3, 1, 2}, std::nullopt};
    TrajectoryPoint pure_data = concat_mixed(data, NoiseSeq(1, {}), 4);
    CHECK(pure_data.size() == 3);
    CHECK(pure_data.suffix.size() == 0);
}

TEST_CASE("concat_mixed: length mismatch is rejected") {
    NoiseSeq tail = NoiseSeq::generate(5, 2, 1);
    TokenSeq head{{1, 2, 3}, std::nullopt};
    CHECK_THROWS_AS(concat_mixed(head, tail, 3), DomainError);
}

TEST_CASE("property: head of data plus tail of noise always has length n") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        std::uint32_t n = 1 + static_cast<std::uint32_t>(rng.next_index(8));
        TokenSeq data;
        for (std::uint32_t i = 0; i < n; ++i)
            data.ids.push_back(1 + static_cast<std::uint32_t>(rng.next_index(4)));
        NoiseSeq noise = NoiseSeq::generate(rng.next_u64(), n, 2);
        for (std::uint32_t t = 1; t <= n + 1; ++t) {
            TrajectoryPoint xt = concat_mixed(slice_head(data, t - 1), slice_tail(noise, t), t);
            CHECK(xt.size() == n);
            // The head is a prefix: elementwise equal to the first t-1 ids.
            for (std::uint32_t i = 0; i < t - 1; ++i)
                CHECK(xt.prefix.ids[i] == data.ids[i]);
        }
    }
}

TEST_CASE("io: fnv1a64 is stable") {
    CHECK(fnv1a64(std::string("")) == 0xCBF29CE484222325ULL);
    CHECK(fnv1a64(std::string("a")) != fnv1a64(std::string("b")));
}
