#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "pamda/errors.hpp"
#include "pamda/proto/protobank.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace pamda;
using namespace pamda::proto;
using pamda::testing::random_tensor;

namespace {

BatchCentroids centroids(std::vector<std::vector<double>> rows, std::vector<bool> present) {
  const std::size_t d = rows.front().size();
  Tensor t(rows.size(), d);
  for (std::size_t k = 0; k < rows.size(); ++k) std::copy(rows[k].begin(), rows[k].end(), t.row(k).begin());
  return {t, std::move(present)};
}

std::vector<double> slot(const PrototypeBank& bank, DomainId domain, int k) {
  auto s = bank.prototype(domain, k);
  return {s.begin(), s.end()};
}

}  // namespace

TEST(BatchCentroids, DivisorModes) {
  const Tensor two = Tensor::from_rows({{1, 0}, {3, 0}});
  const std::vector<int> both_first{0, 0};
  for (auto mode : {DivisorMode::ClusterSize, DivisorMode::BatchSize}) {
    const auto c = batch_class_centroids(two, both_first, 2, mode);
    EXPECT_EQ(c.centroids(0, 0), 2.0);
    EXPECT_EQ(c.centroids(0, 1), 0.0);
    EXPECT_TRUE(c.present[0]);
    EXPECT_FALSE(c.present[1]);
  }
  const Tensor three = Tensor::from_rows({{1, 0}, {3, 0}, {5, 0}});
  const std::vector<int> labels{0, 0, 1};
  const auto cs = batch_class_centroids(three, labels, 2, DivisorMode::ClusterSize);
  EXPECT_EQ(cs.centroids(0, 0), 2.0);
  EXPECT_EQ(cs.centroids(1, 0), 5.0);
  const auto bs = batch_class_centroids(three, labels, 2, DivisorMode::BatchSize);
  EXPECT_DOUBLE_EQ(bs.centroids(0, 0), 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(bs.centroids(1, 0), 5.0 / 3.0);
}

TEST(BatchCentroids, SingleSampleIsItsOwnCentroid) {
  const Tensor one = Tensor::from_rows({{0.25, -0.5}});
  const std::vector<int> label{1};
  for (auto mode : {DivisorMode::ClusterSize, DivisorMode::BatchSize}) {
    const auto c = batch_class_centroids(one, label, 3, mode);
    EXPECT_EQ(c.centroids(1, 0), 0.25);
    EXPECT_EQ(c.centroids(1, 1), -0.5);
    EXPECT_EQ(c.present, (std::vector<bool>{false, true, false}));
  }
}

TEST(BatchCentroids, LabelOutOfRangeIsContractViolation) {
  const std::vector<int> labels{0, 2};
  EXPECT_THROW(batch_class_centroids(Tensor(2, 2), labels, 2), ContractViolation);
}

TEST(AdaptiveThreshold, SpotValues) {
  EXPECT_EQ(adaptive_threshold(0.0), 0.5);
  EXPECT_NEAR(adaptive_threshold(1.0), 0.952574, 1e-6);
  double prev = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double g = adaptive_threshold(i / 100.0);
    EXPECT_GT(g, prev);
    prev = g;
  }
}

TEST(PseudoLabels, ArgmaxWithSmallestIndexTies) {
  const auto p = assign_pseudo_labels(Tensor::from_rows({{0.1, 0.7, 0.2}}));
  EXPECT_EQ(p.labels[0], 1);
  EXPECT_EQ(p.confidences[0], 0.7);
  const auto u = assign_pseudo_labels(Tensor(1, 4, 0.25));
  EXPECT_EQ(u.labels[0], 0);
  EXPECT_EQ(u.confidences[0], 0.25);
}

TEST(PseudoLabels, RowsMustBeDistributions) {
  EXPECT_THROW(assign_pseudo_labels(Tensor::from_rows({{0.5, 0.6}})), ContractViolation);
  EXPECT_THROW(assign_pseudo_labels(Tensor::from_rows({{std::nan(""), 1.0}})), ContractViolation);
}

TEST(PseudoLabels, PermutationEquivariant) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = 2 + rng() % 5;
    Tensor probs = random_tensor(6, K, rng, 0.01, 1.0);
    for (std::size_t i = 0; i < 6; ++i) {
      auto r = probs.row(i);
      const double z = std::accumulate(r.begin(), r.end(), 0.0);
      for (double& v : r) v /= z;
    }
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor permuted(6, K);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t k = 0; k < K; ++k) permuted(i, static_cast<std::size_t>(perm[k])) = probs(i, k);
    }
    const auto a = assign_pseudo_labels(probs);
    const auto b = assign_pseudo_labels(permuted);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_EQ(b.labels[i], perm[static_cast<std::size_t>(a.labels[i])]);
      EXPECT_EQ(a.confidences[i], b.confidences[i]);
    }
  }
}

TEST(PseudoLabels, InvariantToLogitShift) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const auto logits = pamda::testing::random_vector(4, rng, -3.0, 3.0);
    auto shifted = logits;
    for (double& v : shifted) v += 7.5;
    const auto p = pamda::testing::softmax(logits, 1.0);
    const auto q = pamda::testing::softmax(shifted, 1.0);
    EXPECT_EQ(assign_pseudo_labels(Tensor(1, 4, p)).labels,
              assign_pseudo_labels(Tensor(1, 4, q)).labels);
  }
}

TEST(ConfidenceSplit, Boundaries) {
  const PseudoLabels p{{0, 1, 1}, {0.5, 0.9, 0.99}};
  const auto all_high = split_by_confidence(p, 0.0);
  EXPECT_EQ(all_high.high.size(), 3u);
  EXPECT_TRUE(all_high.low.empty());
  const auto all_low = split_by_confidence(p, 1.01);
  EXPECT_TRUE(all_low.high.empty());
  EXPECT_EQ(all_low.low.size(), 3u);
}

TEST(ConfidenceSplit, AgainstPerfectSourceThreshold) {
  const PseudoLabels p{{0, 1}, {0.96, 0.40}};
  const auto s = split_by_confidence(p, adaptive_threshold(1.0));
  ASSERT_EQ(s.high.size(), 1u);
  EXPECT_EQ(s.high[0].row, 0u);
  EXPECT_EQ(s.low, (std::vector<std::size_t>{1}));
  // Just below gamma(1) stays low confidence.
  const PseudoLabels edge{{0}, {0.952573}};
  EXPECT_TRUE(split_by_confidence(edge, adaptive_threshold(1.0)).high.empty());
}

TEST(ConfidenceSplit, PartitionsRandomBatches) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 1 + rng() % 20;
    PseudoLabels p;
    for (std::size_t i = 0; i < m; ++i) {
      p.labels.push_back(0);
      p.confidences.push_back(u(rng));
    }
    const double gamma = u(rng);
    const auto s = split_by_confidence(p, gamma);
    std::vector<int> seen(m);
    for (const auto& h : s.high) {
      ++seen[h.row];
      EXPECT_GE(h.confidence, gamma);
    }
    for (std::size_t r : s.low) {
      ++seen[r];
      EXPECT_LT(p.confidences[r], gamma);
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
}

TEST(PrototypeBank, MomentumSpotValue) {
  PrototypeBank bank(2, 2, 2, 0.7);
  bank.momentum_update(DomainId::source(0), centroids({{0, 0}, {0, 0}}, {true, false}));
  bank.momentum_update(DomainId::source(0), centroids({{1, 1}, {9, 9}}, {true, false}));
  const auto s = slot(bank, DomainId::source(0), 0);
  // 0.7 * 0 + 0.3 * 1 with the coefficient computed as 1 - 0.7.
  EXPECT_EQ(s[0], (1.0 - 0.7) * 1.0);
  EXPECT_NEAR(s[0], 0.3, 1e-15);
  EXPECT_FALSE(bank.initialized(DomainId::source(0), 1));
}

TEST(PrototypeBank, FirstTouchCopiesCentroid) {
  PrototypeBank bank(2, 2, 3);
  bank.momentum_update(DomainId::target(), centroids({{0.1, 0.2, 0.3}, {0, 0, 0}}, {true, false}));
  EXPECT_EQ(slot(bank, DomainId::target(), 0), (std::vector<double>{0.1, 0.2, 0.3}));
}

TEST(PrototypeBank, AbsentClassUntouched) {
  PrototypeBank bank(2, 2, 2);
  bank.momentum_update(DomainId::source(1), centroids({{1, 2}, {3, 4}}, {true, true}));
  const auto before = slot(bank, DomainId::source(1), 1);
  bank.momentum_update(DomainId::source(1), centroids({{5, 5}, {100, 100}}, {true, false}));
  EXPECT_EQ(slot(bank, DomainId::source(1), 1), before);
}

TEST(PrototypeBank, UninitializedReadIsStateError) {
  PrototypeBank bank(2, 3, 2);
  EXPECT_THROW(bank.prototype(DomainId::source(1), 2), StateError);
  EXPECT_FALSE(bank.any_initialized());
  EXPECT_FALSE(bank.all_sources_initialized());
}

TEST(PrototypeBank, EtaRange) {
  EXPECT_THROW(PrototypeBank(2, 2, 2, 1.0), ConfigError);
  EXPECT_THROW(PrototypeBank(2, 2, 2, -0.1), ConfigError);
  EXPECT_NO_THROW(PrototypeBank(2, 2, 2, 0.0));
}

// Replays a random update log and checks each slot against the explicit
// convex combination of the centroids it received.
TEST(PrototypeBank, SlotsAreConvexCombinationsOfCentroids) {
  std::mt19937_64 rng(31);
  const double eta = 0.7;
  PrototypeBank bank(2, 3, 2, eta);
  std::vector<std::vector<std::vector<double>>> log(3);  // target slots only
  for (int step = 0; step < 50; ++step) {
    std::vector<std::vector<double>> rows;
    std::vector<bool> present;
    for (int k = 0; k < 3; ++k) {
      rows.push_back(pamda::testing::random_vector(2, rng));
      present.push_back(rng() % 2 == 0);
      if (present.back()) log[k].push_back(rows.back());
    }
    bank.momentum_update(DomainId::target(), centroids(rows, present));
  }
  for (int k = 0; k < 3; ++k) {
    if (log[k].empty()) continue;
    const std::size_t n = log[k].size();
    std::vector<double> coef(n);
    coef[0] = std::pow(eta, static_cast<double>(n - 1));
    for (std::size_t i = 1; i < n; ++i) coef[i] = (1 - eta) * std::pow(eta, static_cast<double>(n - 1 - i));
    EXPECT_NEAR(std::accumulate(coef.begin(), coef.end(), 0.0), 1.0, 1e-12);
    for (std::size_t c = 0; c < 2; ++c) {
      double expected = 0.0;
      for (std::size_t i = 0; i < n; ++i) expected += coef[i] * log[k][i][c];
      EXPECT_NEAR(bank.prototype(DomainId::target(), k)[c], expected, 1e-12);
    }
  }
}

TEST(PrototypeBank, PrototypeCsv) {
  pamda::testing::TempDir dir;
  PrototypeBank bank(2, 2, 3);
  bank.momentum_update(DomainId::source(0), centroids({{1, 2, 3}, {0, 0, 0}}, {true, false}));
  write_prototype_csv(dir / "p.csv", bank);
  std::ifstream in(dir / "p.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "domain,class,dim_1,dim_2,dim_3,initialized");
  EXPECT_EQ(first, "source_1,1,1,2,3,1");
  int rows = 1;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 6);
}
