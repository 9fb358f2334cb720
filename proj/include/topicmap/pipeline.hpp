#pragma once

#include <map>
#include <string>
#include <vector>

#include "topicmap/corpus.hpp"
#include "topicmap/lgpr.hpp"
#include "topicmap/stm.hpp"
#include "topicmap/topic_summary.hpp"

namespace topicmap {

struct PipelineConfig {
    // paths
    std::string transactions_path;
    std::string stores_path;
    std::string output_dir;

    // ingest
    int top_v = 10000;
    int min_basket = 3;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;

    StmConfig stm;                       // topic-model cadence and priors
    double stm_alpha_total = 1000.0;     // symmetric alpha_k = alpha_total / K
    double stm_beta = 0.01;              // symmetric beta_v

    // posterior summary
    double cluster_threshold = 0.35;
    int min_cluster_size = 10;

    StmConfig refit;                     // fixed-topic refit cadence (chains=1 default)

    // spatial stage
    GPPriors gp_priors;
    GPMcmcConfig gp_mcmc;
    double gp_test_fraction = 0.2;       // held-out stores for the LGPR/LR comparison
    std::vector<int> gp_topics;          // clustered-topic indices; empty = all

    int npmi_top_n = 15;
    int threads = 0;
    bool resume = false;                 // reuse stage outputs already on disk

    void validate() const;
};

/// Key/value with [sections]; `#` starts a comment. Unknown keys are errors.
PipelineConfig load_pipeline_config(const std::string& path);

struct ArtifactEntry {
    std::string name;
    std::string path;     // relative to the output directory
    std::string sha256;
};

struct Manifest {
    std::vector<ArtifactEntry> artifacts;
    std::map<std::string, std::string> settings;   // cadence echo
};

/// ingest -> fit -> summarize -> refit -> evaluate -> per-topic GP fits
/// -> comparison -> exports. Writes manifest.json last; a failing stage
/// reports its name and leaves earlier artifacts on disk.
Manifest run_pipeline(const PipelineConfig& config);

void save_manifest(const Manifest& manifest, const std::string& path);

struct ExportReport {
    int n_features = 0;
    std::vector<std::string> skipped;   // store ids without metadata
};

/// Joins per-store values with store metadata into a GeoJSON point
/// collection with properties {store_id, value}.
ExportReport export_map(const std::vector<std::pair<std::string, double>>& values,
                        const std::vector<StoreGeo>& stores, const std::string& out_path);

}  // namespace topicmap
