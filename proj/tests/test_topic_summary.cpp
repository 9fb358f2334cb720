#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "testutil.hpp"
#include "topicmap/eval.hpp"
#include "topicmap/topic_summary.hpp"

using namespace topicmap;

namespace {

TopicBag bag_from_rows(const std::vector<std::pair<std::vector<double>, int>>& rows) {
    TopicBag bag;
    bag.topics.resize(rows.size(), rows[0].first.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].first.size(); ++j)
            bag.topics(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i].first[j];
        bag.sample_index.push_back(rows[i].second);
    }
    return bag;
}

/// S noisy copies of each base topic, one copy per posterior sample.
TopicBag noisy_bag(const Eigen::MatrixXd& base, int n_samples, double concentration,
                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TopicBag bag;
    bag.topics.resize(base.rows() * n_samples, base.cols());
    int row = 0;
    for (int s = 0; s < n_samples; ++s) {
        for (Eigen::Index k = 0; k < base.rows(); ++k) {
            Eigen::VectorXd draw(base.cols());
            double total = 0.0;
            for (Eigen::Index v = 0; v < base.cols(); ++v) {
                std::gamma_distribution<double> gamma(concentration * base(k, v), 1.0);
                draw[v] = gamma(rng);
                total += draw[v];
            }
            bag.topics.row(row) = (draw / total).transpose();
            bag.sample_index.push_back(s);
            ++row;
        }
    }
    return bag;
}

/// Well-separated base topics: disjoint supports smoothed to stay positive.
Eigen::MatrixXd separated_topics(int k, int v) {
    Eigen::MatrixXd base = Eigen::MatrixXd::Constant(k, v, 0.01 / v);
    const int width = v / k;
    for (int i = 0; i < k; ++i)
        for (int j = i * width; j < (i + 1) * width; ++j) base(i, j) += 0.99 / width;
    for (int i = 0; i < k; ++i) base.row(i) /= base.row(i).sum();
    return base;
}

std::set<std::set<int>> partition_of(const std::vector<ClusteredTopic>& clusters) {
    std::set<std::set<int>> partition;
    for (const auto& c : clusters) partition.insert({c.members.begin(), c.members.end()});
    return partition;
}

}  // namespace

TEST_CASE("identical topics from different samples merge into one cluster") {
    TopicBag bag = bag_from_rows({{{0.7, 0.2, 0.1}, 1}, {{0.7, 0.2, 0.1}, 2}});
    auto clusters = cluster(bag, 0.35);
    REQUIRE(clusters.size() == 1);
    CHECK(clusters[0].size == 2);
    CHECK(clusters[0].samples == std::set<int>{1, 2});
    CHECK(clusters[0].mean.sum() == doctest::Approx(1.0));
}

TEST_CASE("identical topics from the same sample never merge") {
    TopicBag bag = bag_from_rows({{{0.7, 0.2, 0.1}, 1}, {{0.7, 0.2, 0.1}, 1}});
    auto clusters = cluster(bag, 0.35);
    CHECK(clusters.size() == 2);
    for (const auto& c : clusters) CHECK(c.size == 1);
}

TEST_CASE("S copies of separated topics give exactly one cluster per topic") {
    const int n_samples = 8;
    const Eigen::MatrixXd base = separated_topics(3, 30);
    // pairwise cosine distance of the bases is > 0.8
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            CHECK(cosine_distance(base.row(i).transpose(), base.row(j).transpose()) > 0.8);
    TopicBag bag = noisy_bag(base, n_samples, 500.0, 4);
    auto clusters = cluster(bag, 0.35);
    REQUIRE(clusters.size() == 3);
    for (const auto& c : clusters) {
        CHECK(c.size == n_samples);
        CHECK(static_cast<int>(c.samples.size()) == n_samples);
    }
}

TEST_CASE("no cluster ever gathers two topics of one sample; merging halts") {
    std::mt19937_64 rng(12);
    TopicBag bag;
    const int n = 40;
    bag.topics.resize(n, 8);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd row(8);
        for (int j = 0; j < 8; ++j) {
            std::gamma_distribution<double> gamma(0.5, 1.0);
            row[j] = gamma(rng) + 1e-12;
        }
        bag.topics.row(i) = (row / row.sum()).transpose();
        bag.sample_index.push_back(i % 5);
    }
    auto clusters = cluster(bag, 0.6);
    int members = 0;
    for (const auto& c : clusters) {
        members += c.size;
        CHECK(static_cast<int>(c.samples.size()) == c.size);   // one member per sample
    }
    CHECK(members == n);   // every topic ends up in exactly one cluster
}

TEST_CASE("permuting the bag leaves the partition unchanged when distances are distinct") {
    const Eigen::MatrixXd base = separated_topics(3, 24);
    TopicBag bag = noisy_bag(base, 6, 400.0, 9);
    auto clusters = cluster(bag, 0.35);

    std::vector<int> perm(bag.size());
    for (int i = 0; i < bag.size(); ++i) perm[i] = i;
    std::mt19937_64 rng(3);
    std::shuffle(perm.begin(), perm.end(), rng);
    TopicBag shuffled;
    shuffled.topics.resize(bag.topics.rows(), bag.topics.cols());
    shuffled.sample_index.resize(bag.size());
    for (int i = 0; i < bag.size(); ++i) {
        shuffled.topics.row(i) = bag.topics.row(perm[i]);
        shuffled.sample_index[i] = bag.sample_index[perm[i]];
    }
    auto clusters_shuffled = cluster(shuffled, 0.35);

    // map member ids back through the permutation and compare partitions
    std::set<std::set<int>> remapped;
    for (const auto& c : clusters_shuffled) {
        std::set<int> group;
        for (int m : c.members) group.insert(perm[m]);
        remapped.insert(group);
    }
    CHECK(remapped == partition_of(clusters));
}

TEST_CASE("select filters by recurrence and renormalizes") {
    const Eigen::MatrixXd base = separated_topics(2, 12);
    TopicBag bag = noisy_bag(base, 6, 500.0, 17);
    auto clusters = cluster(bag, 0.35);
    REQUIRE(clusters.size() == 2);
    CHECK(select(clusters, 1).size() == 2);     // identity
    CHECK(select(clusters, 6).size() == 2);
    CHECK(select(clusters, 7).empty());         // boundary: max size is 6
    CHECK_THROWS_AS(select(clusters, 0), std::invalid_argument);
    for (const auto& c : select(clusters, 1)) CHECK(c.mean.sum() == doctest::Approx(1.0));
}

TEST_CASE("threshold bounds are enforced") {
    TopicBag bag = bag_from_rows({{{0.5, 0.5}, 0}});
    CHECK_THROWS_AS(cluster(bag, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(cluster(bag, 1.0), std::invalid_argument);
}

TEST_CASE("grid: single-sample bag keeps clusters at size 1") {
    auto corpus = testutil::random_corpus(2, 12, 24, 6, 5);
    split_corpus(corpus, 0.25, 3);
    const Eigen::MatrixXd base = separated_topics(3, 12);
    TopicBag bag = noisy_bag(base, 1, 500.0, 2);   // one posterior sample

    GridEvalConfig cfg;
    cfg.refit.chains = 1;
    cfg.refit.iters = 40;
    cfg.refit.burn_in = 20;
    cfg.refit.thin = 10;
    auto rows = grid_evaluate(bag, {0.35}, {1, 2}, corpus, cfg);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].min_size == 1);
    CHECK(rows[0].n_clusters == 3);
    CHECK(std::isfinite(rows[0].perplexity));
    CHECK(rows[1].min_size == 2);
    CHECK(rows[1].n_clusters == 0);   // nothing recurs in a single sample
    CHECK(!std::isfinite(rows[1].perplexity));
}

TEST_CASE("grid: pure-noise topics do not disturb recurrent clusters") {
    auto corpus = testutil::random_corpus(2, 20, 30, 6, 8);
    split_corpus(corpus, 0.2, 1);
    const Eigen::MatrixXd base = separated_topics(3, 20);
    TopicBag bag = noisy_bag(base, 6, 500.0, 21);

    // add one wildly different noise topic per sample
    std::mt19937_64 rng(77);
    TopicBag noisy;
    noisy.topics.resize(bag.topics.rows() + 6, 20);
    noisy.topics.topRows(bag.topics.rows()) = bag.topics;
    noisy.sample_index = bag.sample_index;
    for (int s = 0; s < 6; ++s) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(20);
        // disjoint spike per sample keeps the noise topics far apart
        row[14 + (s % 6)] = 0.97;
        row.array() += 0.03 / 20;
        noisy.topics.row(bag.topics.rows() + s) = (row / row.sum()).transpose();
        noisy.sample_index.push_back(s);
    }

    auto before = cluster(bag, 0.35);
    auto with_noise = cluster(noisy, 0.35);
    auto big_before = select(before, 2);
    auto big_after = select(with_noise, 2);
    REQUIRE(big_before.size() == big_after.size());
    // compare the surviving partitions (member ids of the original rows)
    CHECK(partition_of(big_before) == partition_of(big_after));
}

TEST_CASE("grid reproduces the pipeline's chosen cell settings") {
    auto corpus = testutil::random_corpus(2, 12, 20, 5, 2);
    split_corpus(corpus, 0.2, 9);
    const Eigen::MatrixXd base = separated_topics(2, 12);
    TopicBag bag = noisy_bag(base, 12, 500.0, 31);
    GridEvalConfig cfg;
    cfg.refit.chains = 1;
    cfg.refit.iters = 30;
    cfg.refit.burn_in = 10;
    cfg.refit.thin = 10;
    auto rows = grid_evaluate(bag, {0.35}, {10}, corpus, cfg);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].threshold == doctest::Approx(0.35));
    CHECK(rows[0].min_size == 10);
    CHECK(rows[0].n_clusters == 2);
    CHECK(std::isfinite(rows[0].mean_npmi));
    CHECK(std::isfinite(rows[0].mean_distinctiveness));
    CHECK(rows[0].mean_credibility > 0.9);   // recurrent by construction
}
