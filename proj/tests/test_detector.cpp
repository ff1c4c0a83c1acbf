#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "gradcheck.hpp"
#include "paano/detector.hpp"

using namespace paano;

namespace {

TimeSeries random_walk(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    TimeSeries s;
    s.values = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t t = 1; t < n; ++t) {
        for (std::size_t c = 0; c < d; ++c) {
            s.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
                s.values(static_cast<Eigen::Index>(t - 1), static_cast<Eigen::Index>(c)) + g(rng);
        }
    }
    return s;
}

ReducedMemoryBank bank_from(const ModelParams<float>& params, const TimeSeries& s, double ratio) {
    return reduce_bank(build_bank(params, extract_patches(s, params.window)), ratio, 1);
}

// Patch score straight from the definition: sort every distance to the bank.
double oracle_patch_score(const Vector<float>& h, const ReducedMemoryBank& bank, std::size_t k) {
    std::vector<double> d;
    for (Eigen::Index i = 0; i < bank.embeddings.rows(); ++i) {
        d.push_back(cosine_distance(h, Vector<float>(bank.embeddings.row(i).transpose())));
    }
    std::sort(d.begin(), d.end());
    k = std::min(k, d.size());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += d[i];
    return s / static_cast<double>(k);
}

}  // namespace

TEST(PatchScore, MatchesExhaustiveScanAndRange) {
    const auto s = random_walk(200, 1, 2);
    const auto params = init_params(1, 16, 3);
    const auto bank = bank_from(params, s, 0.2);
    const auto patches = extract_patches(random_walk(100, 1, 9), 16);
    for (std::size_t t = 1; t <= patches.size(); ++t) {
        for (std::size_t k : {1u, 3u, 7u}) {
            const double v = patch_score(params, bank, patches.at(t), k);
            EXPECT_EQ(v, oracle_patch_score(encode(params, patches.at(t)), bank, k));
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 2.0);
        }
    }
}

TEST(PatchScore, BankMemberScoresZero) {
    const auto s = random_walk(120, 2, 4);
    const auto params = init_params(2, 16, 3);
    const auto patches = extract_patches(s, 16);
    const auto full = build_bank(params, patches);
    const auto bank = reduce_bank(full, 0.1, 2);
    const std::size_t row = bank.source_rows[0];
    EXPECT_EQ(patch_score(params, bank, patches.at(row + 1), 1), 0.0);
}

TEST(AggregateScores, WindowCounts) {
    // Patch scores 1, 2, 4, 8, ... make every subset sum distinct.
    const std::size_t n = 12;
    const std::size_t w = 4;
    std::vector<double> per(n - w + 1);
    for (std::size_t i = 0; i < per.size(); ++i) per[i] = std::ldexp(1.0, static_cast<int>(i));
    const auto s = aggregate_scores(per, n, w);
    ASSERT_EQ(s.size(), n);
    EXPECT_EQ(s[0], 1.0);                             // t = 1: only p_1
    EXPECT_EQ(s[3], (1.0 + 2.0 + 4.0 + 8.0) / 4.0);   // t = w: p_1..p_4
    EXPECT_EQ(s[n - 1], per.back());                  // last step: only the last patch
    EXPECT_EQ(s[5], (4.0 + 8.0 + 16.0 + 32.0) / 4.0);  // interior: p_3..p_6
}

TEST(ScoreSeries, EqualsNaivePerStepRecomputation) {
    for (std::size_t w : {8u, 16u, 64u}) {
        const auto params = init_params(1, w, w);
        const auto bank = bank_from(params, random_walk(300, 1, w + 1), 0.1);
        for (std::size_t n : {w, w + 1, 2 * w + 3, std::size_t{500}}) {
            const auto s = random_walk(n, 1, n + w);
            const auto scores = score_series(params, bank, s, 3).scores;
            ASSERT_EQ(scores.size(), n);
            const auto patches = extract_patches(s, w);
            const std::size_t last = n - w + 1;
            std::vector<Vector<float>> h(last + 1);
            for (std::size_t u = 1; u <= last; ++u) h[u] = encode(params, patches.at(u));
            for (std::size_t t = 1; t <= n; ++t) {
                double sum = 0.0;
                std::size_t count = 0;
                for (std::size_t u = 1; u <= last; ++u) {
                    if (u <= t && t <= u + w - 1) {  // patch u covers step t
                        sum += oracle_patch_score(h[u], bank, 3);
                        ++count;
                    }
                }
                ASSERT_EQ(scores[t - 1], sum / static_cast<double>(count)) << "w=" << w << " n=" << n << " t=" << t;
            }
        }
    }
}

TEST(ScoreSeries, ConstantSeriesScoresAreAllEqual) {
    TimeSeries s;
    s.values = RowMatrix::Constant(80, 1, 3.25);
    const auto params = init_params(1, 16, 2);
    const auto bank = bank_from(params, s, 0.1);
    const auto scores = score_series(params, bank, s, 3).scores;
    for (double v : scores) EXPECT_EQ(v, scores[0]);
}

TEST(ScoreSeries, ErrorsOnShortOrMismatchedSeries) {
    const auto params = init_params(1, 16, 2);
    const auto bank = bank_from(params, random_walk(50, 1, 1), 0.1);
    EXPECT_THROW(score_series(params, bank, random_walk(15, 1, 2), 3), DataError);
    EXPECT_THROW(score_series(params, bank, random_walk(40, 2, 2), 3), ShapeError);
}
