#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "topicmap/corpus.hpp"

namespace topicmap {

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Held-out negative log-likelihood per token,
///   -(1/N') sum_tokens log sum_k theta_{d,k} phi_{k,w},
/// the transaction-level PDP mixture marginalized at its prior mean
/// E[nu] = theta_d (which makes discount/strength inert; they are kept
/// for interface completeness). Tokens with zero mass under every topic
/// fall back to a smoothed phi rather than -inf.
double perplexity(const Corpus& corpus, Split split, const Eigen::MatrixXd& phi,
                  const Eigen::MatrixXd& theta, double discount, double strength,
                  double smoothing = 1e-12);

/// Mean normalized PMI over unordered pairs of the topic's top_n most
/// probable products, with transaction-level empirical probabilities
/// from the training split. Pairs that never co-occur (or involve a
/// never-observed product) contribute the conventional floor -1; a pair
/// present in every basket contributes 1.
double npmi(const Eigen::VectorXd& topic, const Corpus& corpus, int top_n = 15);

/// Minimum cosine distance from the topic to any peer from the same
/// posterior sample; empty peer set is reported as missing.
std::optional<double> distinctiveness(const Eigen::VectorXd& topic,
                                      const std::vector<Eigen::VectorXd>& peers);

/// Mean over other posterior samples of the maximum cosine similarity to
/// any topic in that sample.
double credibility(const Eigen::VectorXd& topic,
                   const std::vector<Eigen::MatrixXd>& other_samples);

struct AlignmentResult {
    struct Pair {
        int index_a;
        int index_b;
        double similarity;
    };
    std::vector<Pair> pairs;        // in pairing order; similarities non-increasing
    std::vector<int> unmatched;     // indices of the larger set left unpaired
};

/// Greedy alignment: repeatedly pairs the globally most similar
/// (unpaired) topics until the smaller set is exhausted.
AlignmentResult align_greedy(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Split R-hat over per-chain scalar series (>= 2 chains, equal lengths
/// >= 10). Chains with zero variance everywhere give 1.
double rhat(const std::vector<std::vector<double>>& chains);

}  // namespace topicmap
