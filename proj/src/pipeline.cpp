#include "topicmap/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "topicmap/eval.hpp"
#include "topicmap/io.hpp"

namespace topicmap {

namespace fs = std::filesystem;
using nlohmann::json;

void PipelineConfig::validate() const {
    if (transactions_path.empty()) throw std::invalid_argument("config: transactions path missing");
    if (stores_path.empty()) throw std::invalid_argument("config: stores path missing");
    if (output_dir.empty()) throw std::invalid_argument("config: output dir missing");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("config: test_fraction must be in (0, 1)");
    if (!(gp_test_fraction > 0.0 && gp_test_fraction < 1.0))
        throw std::invalid_argument("config: gp test_fraction must be in (0, 1)");
    if (!(cluster_threshold > 0.0 && cluster_threshold < 1.0))
        throw std::invalid_argument("config: cluster threshold must be in (0, 1)");
    if (min_cluster_size < 1) throw std::invalid_argument("config: min cluster size must be >= 1");
}

namespace {

struct IniFile {
    std::map<std::string, std::map<std::string, std::string>> sections;

    bool has(const std::string& section, const std::string& key) const {
        auto s = sections.find(section);
        return s != sections.end() && s->second.count(key) > 0;
    }
    std::string get(const std::string& section, const std::string& key) const {
        return sections.at(section).at(key);
    }
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

IniFile parse_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    IniFile ini;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        ini.sections[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return ini;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

}  // namespace

PipelineConfig load_pipeline_config(const std::string& path) {
    const IniFile ini = parse_ini(path);
    PipelineConfig cfg;
    cfg.refit.chains = 1;
    cfg.refit.iters = 15500;
    cfg.refit.burn_in = 1000;
    cfg.refit.thin = 500;

    struct Key {
        std::string section, key;
        std::function<void(const std::string&)> apply;
    };
    std::vector<Key> keys = {
        {"paths", "transactions", [&](const std::string& v) { cfg.transactions_path = v; }},
        {"paths", "stores", [&](const std::string& v) { cfg.stores_path = v; }},
        {"paths", "output", [&](const std::string& v) { cfg.output_dir = v; }},
        {"ingest", "top_v", [&](const std::string& v) { cfg.top_v = std::stoi(v); }},
        {"ingest", "min_basket", [&](const std::string& v) { cfg.min_basket = std::stoi(v); }},
        {"ingest", "test_fraction", [&](const std::string& v) { cfg.test_fraction = std::stod(v); }},
        {"ingest", "seed", [&](const std::string& v) { cfg.seed = std::stoull(v); }},
        {"stm", "topics", [&](const std::string& v) { cfg.stm.topics = std::stoi(v); }},
        {"stm", "iters", [&](const std::string& v) { cfg.stm.iters = std::stoi(v); }},
        {"stm", "burn_in", [&](const std::string& v) { cfg.stm.burn_in = std::stoi(v); }},
        {"stm", "thin", [&](const std::string& v) { cfg.stm.thin = std::stoi(v); }},
        {"stm", "chains", [&](const std::string& v) { cfg.stm.chains = std::stoi(v); }},
        {"stm", "trace_every", [&](const std::string& v) { cfg.stm.trace_every = std::stoi(v); }},
        {"stm", "alpha_total", [&](const std::string& v) { cfg.stm_alpha_total = std::stod(v); }},
        {"stm", "beta", [&](const std::string& v) { cfg.stm_beta = std::stod(v); }},
        {"stm", "discount", [&](const std::string& v) { cfg.stm.discount = std::stod(v); }},
        {"stm", "strength", [&](const std::string& v) { cfg.stm.strength = std::stod(v); }},
        {"stm", "seed", [&](const std::string& v) { cfg.stm.seed = std::stoull(v); }},
        {"summary", "threshold", [&](const std::string& v) { cfg.cluster_threshold = std::stod(v); }},
        {"summary", "min_size", [&](const std::string& v) { cfg.min_cluster_size = std::stoi(v); }},
        {"refit", "iters", [&](const std::string& v) { cfg.refit.iters = std::stoi(v); }},
        {"refit", "burn_in", [&](const std::string& v) { cfg.refit.burn_in = std::stoi(v); }},
        {"refit", "thin", [&](const std::string& v) { cfg.refit.thin = std::stoi(v); }},
        {"refit", "chains", [&](const std::string& v) { cfg.refit.chains = std::stoi(v); }},
        {"refit", "seed", [&](const std::string& v) { cfg.refit.seed = std::stoull(v); }},
        {"gp", "chains", [&](const std::string& v) { cfg.gp_mcmc.chains = std::stoi(v); }},
        {"gp", "iters", [&](const std::string& v) { cfg.gp_mcmc.iters = std::stoi(v); }},
        {"gp", "burn_in", [&](const std::string& v) { cfg.gp_mcmc.burn_in = std::stoi(v); }},
        {"gp", "thin", [&](const std::string& v) { cfg.gp_mcmc.thin = std::stoi(v); }},
        {"gp", "seed", [&](const std::string& v) { cfg.gp_mcmc.seed = std::stoull(v); }},
        {"gp", "test_fraction", [&](const std::string& v) { cfg.gp_test_fraction = std::stod(v); }},
        {"gp", "topics", [&](const std::string& v) { cfg.gp_topics = parse_int_list(v); }},
        {"run", "threads", [&](const std::string& v) { cfg.threads = std::stoi(v); }},
        {"run", "resume", [&](const std::string& v) { cfg.resume = v == "true" || v == "1"; }},
        {"run", "npmi_top_n", [&](const std::string& v) { cfg.npmi_top_n = std::stoi(v); }},
    };

    for (const auto& [section, entries] : ini.sections) {
        for (const auto& [key, value] : entries) {
            auto it = std::find_if(keys.begin(), keys.end(), [&](const Key& k) {
                return k.section == section && k.key == key;
            });
            if (it == keys.end())
                throw std::runtime_error("config: unknown key [" + section + "] " + key);
            it->apply(value);
        }
    }
    cfg.validate();
    return cfg;
}

ExportReport export_map(const std::vector<std::pair<std::string, double>>& values,
                        const std::vector<StoreGeo>& stores, const std::string& out_path) {
    std::map<std::string, const StoreGeo*> by_id;
    for (const auto& s : stores) by_id[s.store_id] = &s;

    ExportReport report;
    json features = json::array();
    for (const auto& [store_id, value] : values) {
        auto it = by_id.find(store_id);
        if (it == by_id.end()) {
            report.skipped.push_back(store_id);
            continue;
        }
        if (!std::isfinite(value)) {
            report.skipped.push_back(store_id);
            continue;
        }
        json feature;
        feature["type"] = "Feature";
        feature["geometry"]["type"] = "Point";
        feature["geometry"]["coordinates"] = {it->second->lon, it->second->lat};
        feature["properties"]["store_id"] = store_id;
        feature["properties"]["value"] = value;
        features.push_back(std::move(feature));
        ++report.n_features;
    }
    json doc;
    doc["type"] = "FeatureCollection";
    doc["features"] = std::move(features);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << doc.dump(2) << "\n";
    if (!report.skipped.empty())
        std::cerr << "export_map: skipped " << report.skipped.size()
                  << " rows without store metadata\n";
    return report;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
    json doc;
    doc["format"] = "topicmap-manifest";
    json artifacts = json::array();
    for (const auto& a : manifest.artifacts)
        artifacts.push_back({{"name", a.name}, {"path", a.path}, {"sha256", a.sha256}});
    doc["artifacts"] = std::move(artifacts);
    doc["settings"] = manifest.settings;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << doc.dump(2) << "\n";
}

namespace {

[[noreturn]] void stage_failure(const std::string& stage, const std::exception& e) {
    throw std::runtime_error("pipeline stage '" + stage + "' failed: " + e.what());
}

}  // namespace

Manifest run_pipeline(const PipelineConfig& config) {
    config.validate();
    fs::create_directories(config.output_dir);
    Manifest manifest;
    auto add_artifact = [&](const std::string& name, const std::string& rel_path) {
        manifest.artifacts.push_back(
            {name, rel_path, sha256_file((fs::path(config.output_dir) / rel_path).string())});
    };
    auto out_path = [&](const std::string& rel) {
        return (fs::path(config.output_dir) / rel).string();
    };

    // ingest + split
    Corpus corpus;
    try {
        if (config.resume && fs::exists(out_path("corpus.json"))) {
            corpus = load_corpus(out_path("corpus.json"));
        } else {
            corpus = ingest(config.transactions_path, config.top_v, config.min_basket);
            split_corpus(corpus, config.test_fraction, config.seed);
            corpus.validate();
            save_corpus(corpus, out_path("corpus.json"));
        }
    } catch (const std::exception& e) {
        stage_failure("ingest", e);
    }
    add_artifact("corpus", "corpus.json");

    // topic model
    StmFit fit;
    try {
        StmConfig stm_cfg = config.stm;
        stm_cfg.alpha.assign(static_cast<std::size_t>(stm_cfg.topics),
                             config.stm_alpha_total / stm_cfg.topics);
        stm_cfg.beta.assign(static_cast<std::size_t>(corpus.vocabulary.size()), config.stm_beta);
        stm_cfg.threads = config.threads;
        if (config.resume && fs::exists(out_path("stm_samples.json"))) {
            fit = load_stm_fit(out_path("stm_samples.json"));
        } else {
            fit = run_chains(corpus, stm_cfg);
            save_stm_fit(fit, out_path("stm_samples.json"));
        }
    } catch (const std::exception& e) {
        stage_failure("fit-stm", e);
    }
    add_artifact("stm_samples", "stm_samples.json");

    // posterior summary
    std::vector<ClusteredTopic> selected;
    TopicBag bag;
    try {
        bag = make_bag(fit.samples);
        if (config.resume && fs::exists(out_path("clustered_topics.json"))) {
            selected = load_clusters(out_path("clustered_topics.json"));
        } else {
            selected = select(cluster(bag, config.cluster_threshold), config.min_cluster_size);
            if (selected.empty()) throw std::runtime_error("no clusters survive the size filter");
            save_clusters(selected, config.cluster_threshold, out_path("clustered_topics.json"));
        }
    } catch (const std::exception& e) {
        stage_failure("summarize-topics", e);
    }
    add_artifact("clustered_topics", "clustered_topics.json");

    // refit store mixtures against the clustered topics
    Eigen::MatrixXd phi(selected.size(), corpus.vocabulary.size());
    for (std::size_t i = 0; i < selected.size(); ++i) phi.row(i) = selected[i].mean.transpose();
    RefitResult refit;
    try {
        StmConfig refit_cfg = config.refit;
        refit_cfg.topics = static_cast<int>(selected.size());
        refit_cfg.alpha.assign(selected.size(), config.stm_alpha_total / selected.size());
        refit_cfg.discount = config.stm.discount;
        refit_cfg.strength = config.stm.strength;
        if (config.resume && fs::exists(out_path("refit_theta.json"))) {
            std::vector<std::string> ids;
            refit.theta_mean = load_theta_mean(out_path("refit_theta.json"), &ids);
        } else {
            refit = refit_fixed_topics(corpus, phi, refit_cfg);
            save_refit(refit, corpus.store_ids, out_path("refit_theta.json"));
        }
    } catch (const std::exception& e) {
        stage_failure("refit-theta", e);
    }
    add_artifact("refit_theta", "refit_theta.json");

    // topic and model evaluation
    try {
        std::vector<Eigen::MatrixXd> sample_sets;
        for (const auto& s : fit.samples) sample_sets.push_back(s.phi);
        std::ostringstream topics_csv;
        topics_csv << "cluster,size,npmi,distinctiveness,credibility\n";
        for (std::size_t i = 0; i < selected.size(); ++i) {
            std::vector<Eigen::VectorXd> peers;
            for (std::size_t j = 0; j < selected.size(); ++j)
                if (j != i) peers.push_back(selected[j].mean);
            const auto dist = distinctiveness(selected[i].mean, peers);
            topics_csv << i << ',' << selected[i].size << ','
                       << format_double(npmi(selected[i].mean, corpus, config.npmi_top_n)) << ','
                       << format_double(dist ? *dist : std::numeric_limits<double>::quiet_NaN())
                       << ',' << format_double(credibility(selected[i].mean, sample_sets)) << '\n';
        }
        std::ofstream tout(out_path("topic_metrics.csv"), std::ios::binary);
        tout << topics_csv.str();
        tout.close();

        std::ostringstream model_csv;
        model_csv << "metric,value\n";
        model_csv << "perplexity,"
                  << format_double(perplexity(corpus, Split::test, phi, refit.theta_mean,
                                              config.stm.discount, config.stm.strength))
                  << '\n';
        model_csv << "n_clusters," << selected.size() << '\n';
        model_csv << "stm_rhat_log_prob,"
                  << (fit.rhat_log_prob ? format_double(*fit.rhat_log_prob) : "nan") << '\n';
        std::ofstream mout(out_path("model_metrics.csv"), std::ios::binary);
        mout << model_csv.str();
    } catch (const std::exception& e) {
        stage_failure("eval", e);
    }
    add_artifact("topic_metrics", "topic_metrics.csv");
    add_artifact("model_metrics", "model_metrics.csv");

    // spatial stage
    try {
        const std::vector<StoreGeo> all_stores = load_stores_csv(config.stores_path);
        std::map<std::string, const StoreGeo*> by_id;
        for (const auto& s : all_stores) by_id[s.store_id] = &s;

        std::vector<StoreGeo> stores;          // corpus stores with metadata
        std::vector<int> store_rows;           // row in theta_mean
        for (int d = 0; d < corpus.n_stores(); ++d) {
            auto it = by_id.find(corpus.store_ids[d]);
            if (it == by_id.end()) {
                std::cerr << "warning: no metadata for store " << corpus.store_ids[d] << "\n";
                continue;
            }
            stores.push_back(*it->second);
            store_rows.push_back(d);
        }
        if (stores.size() < 4) throw std::runtime_error("too few stores with metadata");

        // held-out stores for the LGPR vs LR comparison
        std::vector<std::size_t> order(stores.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(config.seed + 1);
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t n_test = static_cast<std::size_t>(config.gp_test_fraction *
                                                      static_cast<double>(stores.size()));
        n_test = std::min(std::max<std::size_t>(n_test, 1), stores.size() - 2);
        std::vector<bool> is_test(stores.size(), false);
        for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

        std::vector<StoreGeo> train_stores, test_stores;
        std::vector<int> train_rows, test_rows;
        for (std::size_t i = 0; i < stores.size(); ++i) {
            (is_test[i] ? test_stores : train_stores).push_back(stores[i]);
            (is_test[i] ? test_rows : train_rows).push_back(store_rows[i]);
        }

        GPDataset train;
        train.X = design_matrix(train_stores);
        train.dist = distance_matrix(train_stores);
        for (const auto& s : train_stores) train.store_ids.push_back(s.store_id);
        GPQuery heldout;
        heldout.X = design_matrix(test_stores);
        heldout.cross_dist = cross_distance_matrix(test_stores, train_stores);
        heldout.dist = distance_matrix(test_stores);
        for (const auto& s : test_stores) heldout.store_ids.push_back(s.store_id);

        std::vector<int> topic_list = config.gp_topics;
        if (topic_list.empty())
            for (std::size_t i = 0; i < selected.size(); ++i)
                topic_list.push_back(static_cast<int>(i));

        std::vector<std::pair<std::string, ComparisonResult>> comparison_rows;
        std::ostringstream rhat_csv;
        rhat_csv << "topic,parameter,rhat\n";
        for (int k : topic_list) {
            if (k < 0 || k >= static_cast<int>(selected.size()))
                throw std::runtime_error("gp topic index out of range");
            const std::string tag = "topic" + std::to_string(k);

            train.y.resize(train_rows.size());
            for (std::size_t i = 0; i < train_rows.size(); ++i)
                train.y[static_cast<Eigen::Index>(i)] = logit(refit.theta_mean(train_rows[i], k));
            Eigen::VectorXd y_test(test_rows.size());
            for (std::size_t i = 0; i < test_rows.size(); ++i)
                y_test[static_cast<Eigen::Index>(i)] = logit(refit.theta_mean(test_rows[i], k));

            GPMcmcConfig mcmc = config.gp_mcmc;
            mcmc.seed = config.gp_mcmc.seed + static_cast<std::uint64_t>(k) * 1000;
            const GPDraws gp_draws = sample_posterior(train, config.gp_priors, mcmc);
            const GPDraws lr_draws = fit_lr_baseline(train, config.gp_priors, mcmc);

            save_gp_draws(gp_draws, out_path("gp_draws_" + tag + ".json"));
            add_artifact("gp_draws_" + tag, "gp_draws_" + tag + ".json");
            save_coefficient_csv(gp_draws, out_path("coefficients_" + tag + ".csv"));
            add_artifact("coefficients_" + tag, "coefficients_" + tag + ".csv");

            comparison_rows.emplace_back(tag,
                                         compare(train, gp_draws, lr_draws, heldout, y_test));
            for (const auto& [param, value] : gp_draws.rhat)
                rhat_csv << tag << ',' << param << ',' << format_double(value) << '\n';

            const Decomposition decomposition = decompose(train, gp_draws);
            save_residual_csv(train, train_stores, decomposition,
                              out_path("residuals_" + tag + ".csv"));
            add_artifact("residuals_" + tag, "residuals_" + tag + ".csv");

            // probability- and logit-scale maps over every matched store
            std::vector<std::pair<std::string, double>> prob_values, logit_values;
            for (std::size_t i = 0; i < stores.size(); ++i) {
                const double p = refit.theta_mean(store_rows[i], k);
                prob_values.emplace_back(stores[i].store_id, p);
                logit_values.emplace_back(stores[i].store_id, logit(p));
            }
            export_map(prob_values, stores, out_path("map_" + tag + "_prob.geojson"));
            add_artifact("map_" + tag + "_prob", "map_" + tag + "_prob.geojson");
            export_map(logit_values, stores, out_path("map_" + tag + "_logit.geojson"));
            add_artifact("map_" + tag + "_logit", "map_" + tag + "_logit.geojson");

            std::vector<std::pair<std::string, double>> residual_values;
            for (std::size_t i = 0; i < train_stores.size(); ++i)
                residual_values.emplace_back(train_stores[i].store_id,
                                             decomposition.spatial[static_cast<Eigen::Index>(i)]);
            export_map(residual_values, stores, out_path("map_" + tag + "_spatial.geojson"));
            add_artifact("map_" + tag + "_spatial", "map_" + tag + "_spatial.geojson");
        }
        save_comparison_csv(comparison_rows, out_path("comparison.csv"));
        add_artifact("comparison", "comparison.csv");
        std::ofstream rout(out_path("gp_rhat.csv"), std::ios::binary);
        rout << rhat_csv.str();
        rout.close();
        add_artifact("gp_rhat", "gp_rhat.csv");
    } catch (const std::exception& e) {
        stage_failure("fit-gp", e);
    }

    manifest.settings["stm_chains"] = std::to_string(config.stm.chains);
    manifest.settings["stm_iters"] = std::to_string(config.stm.iters);
    manifest.settings["stm_burn_in"] = std::to_string(config.stm.burn_in);
    manifest.settings["stm_thin"] = std::to_string(config.stm.thin);
    manifest.settings["cluster_threshold"] = format_double(config.cluster_threshold);
    manifest.settings["min_cluster_size"] = std::to_string(config.min_cluster_size);
    manifest.settings["refit_iters"] = std::to_string(config.refit.iters);
    manifest.settings["refit_burn_in"] = std::to_string(config.refit.burn_in);
    manifest.settings["refit_thin"] = std::to_string(config.refit.thin);
    manifest.settings["gp_chains"] = std::to_string(config.gp_mcmc.chains);
    manifest.settings["gp_iters"] = std::to_string(config.gp_mcmc.iters);
    manifest.settings["gp_burn_in"] = std::to_string(config.gp_mcmc.burn_in);
    manifest.settings["gp_thin"] = std::to_string(config.gp_mcmc.thin);
    manifest.settings["seed"] = std::to_string(config.seed);
    save_manifest(manifest, out_path("manifest.json"));
    return manifest;
}

}  // namespace topicmap
