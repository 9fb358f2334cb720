#pragma once

#include <string>
#include <vector>

#include "topicmap/corpus.hpp"
#include "topicmap/lgpr.hpp"
#include "topicmap/stm.hpp"
#include "topicmap/topic_summary.hpp"

namespace topicmap {

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

void save_stm_fit(const StmFit& fit, const std::string& path);
StmFit load_stm_fit(const std::string& path);

void save_clusters(const std::vector<ClusteredTopic>& clusters, double threshold,
                   const std::string& path);
std::vector<ClusteredTopic> load_clusters(const std::string& path);

void save_refit(const RefitResult& refit, const std::vector<std::string>& store_ids,
                const std::string& path);
Eigen::MatrixXd load_theta_mean(const std::string& path, std::vector<std::string>* store_ids);

void save_gp_draws(const GPDraws& draws, const std::string& path);
GPDraws load_gp_draws(const std::string& path);

void save_grid_csv(const std::vector<GridRow>& rows, const std::string& path);

/// Table-1-style layout: one row per parameter with posterior mean, SE
/// (posterior standard deviation) and central 95% interval.
void save_coefficient_csv(const GPDraws& draws, const std::string& path);

/// Table-2-style layout comparing the GP regression to the LR baseline.
void save_comparison_csv(const std::vector<std::pair<std::string, ComparisonResult>>& rows,
                         const std::string& path);

/// Fig-9-style per-store residual decomposition for mapping.
void save_residual_csv(const GPDataset& data, const std::vector<StoreGeo>& stores,
                       const Decomposition& decomposition, const std::string& path);

/// `store_id,value` pairs (theta columns, residuals, predictions).
void save_values_csv(const std::vector<std::pair<std::string, double>>& values,
                     const std::string& header_value_name, const std::string& path);
std::vector<std::pair<std::string, double>> load_values_csv(const std::string& path);

std::string sha256_file(const std::string& path);

/// Fixed-precision float formatting shared by every CSV writer so that
/// artifacts are byte-stable across reruns.
std::string format_double(double value);

}  // namespace topicmap
