#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "topicmap/corpus.hpp"
#include "topicmap/stm.hpp"

namespace topicmap {

/// Topic distributions pooled from every posterior sample, one row each.
struct TopicBag {
    Eigen::MatrixXd topics;           // T x V, rows sum to 1
    std::vector<int> sample_index;    // posterior sample id per row

    int size() const { return static_cast<int>(topics.rows()); }
    int n_samples() const;
};

TopicBag make_bag(const std::vector<PosteriorSampleStm>& samples);

struct ClusteredTopic {
    Eigen::VectorXd mean;       // component-wise average of members, renormalized
    int size = 0;               // recurrence
    std::vector<int> members;   // bag row indices
    std::set<int> samples;      // contributing sample ids; |samples| == size
};

/// Bottom-up agglomeration: repeatedly merges the pair of clusters with
/// the globally minimum cosine distance between cluster means, provided
/// their sample sets are disjoint; blocked pairs have their distance
/// overwritten to 1 and are never taken again. Stops once the minimum
/// distance exceeds the threshold. Ties break toward the pair with the
/// lowest member indices.
std::vector<ClusteredTopic> cluster(const TopicBag& bag, double threshold);

/// Keeps clusters with size >= min_size. An empty result is valid and
/// triggers a warning on stderr.
std::vector<ClusteredTopic> select(const std::vector<ClusteredTopic>& clusters, int min_size);

struct GridEvalConfig {
    StmConfig refit;          // cadence + PDP hyperparameters for the theta refit
    int npmi_top_n = 15;
    int threads = 0;          // 0 = one thread per cell, capped by hardware
};

struct GridRow {
    double threshold = 0.0;
    int min_size = 0;
    int n_clusters = 0;
    double perplexity = 0.0;
    double mean_npmi = 0.0;
    double mean_distinctiveness = 0.0;
    double mean_credibility = 0.0;
};

/// One row per (threshold, min_size) cell. Perplexity refits theta on the
/// training split with the selected cluster means held fixed and scores
/// the test split; NPMI/distinctiveness/credibility are averaged over the
/// selected clusters (credibility against the bag's per-sample topic
/// sets). Cells with no surviving cluster report NaN metrics.
std::vector<GridRow> grid_evaluate(const TopicBag& bag, const std::vector<double>& thresholds,
                                   const std::vector<int>& min_sizes, const Corpus& corpus,
                                   const GridEvalConfig& config);

}  // namespace topicmap
