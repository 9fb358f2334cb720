// Command-line front end: ingest transactions, fit the segmented topic
// model, summarize posteriors, fit the spatial regression and export
// plot-ready CSV/GeoJSON artifacts.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "topicmap/eval.hpp"
#include "topicmap/io.hpp"
#include "topicmap/pipeline.hpp"

namespace fs = std::filesystem;
using namespace topicmap;

namespace {

Eigen::MatrixXd clusters_to_phi(const std::vector<ClusteredTopic>& clusters) {
    if (clusters.empty()) throw std::runtime_error("no clustered topics");
    Eigen::MatrixXd phi(clusters.size(), clusters[0].mean.size());
    for (std::size_t i = 0; i < clusters.size(); ++i) phi.row(i) = clusters[i].mean.transpose();
    return phi;
}

GPDataset build_dataset(const std::vector<StoreGeo>& stores,
                        const std::vector<std::pair<std::string, double>>& values) {
    std::map<std::string, double> by_id(values.begin(), values.end());
    std::vector<StoreGeo> matched;
    std::vector<double> y;
    for (const auto& s : stores) {
        auto it = by_id.find(s.store_id);
        if (it == by_id.end()) continue;
        matched.push_back(s);
        y.push_back(logit(it->second));
    }
    if (matched.size() < 2) throw std::runtime_error("fewer than 2 stores join the value table");
    GPDataset data;
    data.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    data.X = design_matrix(matched);
    data.dist = distance_matrix(matched);
    for (const auto& s : matched) data.store_ids.push_back(s.store_id);
    return data;
}

std::vector<StoreGeo> stores_by_ids(const std::vector<StoreGeo>& stores,
                                    const std::vector<std::string>& ids) {
    std::map<std::string, const StoreGeo*> by_id;
    for (const auto& s : stores) by_id[s.store_id] = &s;
    std::vector<StoreGeo> out;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw std::runtime_error("no metadata for store " + id);
        out.push_back(*it->second);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Store-segmented topic modelling with spatial topic-prevalence regression"};
    app.require_subcommand(1);

    // ingest
    std::string in_path, out_path, corpus_path, stores_path;
    int top_v = 10000, min_basket = 3;
    std::uint64_t seed = 0;
    double test_fraction = 0.0;
    auto* ingest_cmd = app.add_subcommand("ingest", "Filter and index transaction records");
    ingest_cmd->add_option("--input", in_path, "line-delimited JSON records")->required();
    ingest_cmd->add_option("--top-v", top_v, "vocabulary size");
    ingest_cmd->add_option("--min-basket", min_basket, "minimum basket size");
    ingest_cmd->add_option("--seed", seed, "split seed");
    ingest_cmd->add_option("--test-fraction", test_fraction, "held-out fraction (0 disables)");
    ingest_cmd->add_option("--out", out_path, "corpus JSON")->required();
    ingest_cmd->callback([&] {
        Corpus corpus = ingest(in_path, top_v, min_basket);
        if (test_fraction > 0.0) split_corpus(corpus, test_fraction, seed);
        corpus.validate();
        save_corpus(corpus, out_path);
        std::cout << "corpus: " << corpus.n_stores() << " stores, " << corpus.n_transactions()
                  << " baskets, V=" << corpus.vocabulary.size() << ", "
                  << corpus.token_count(Split::train) << " train / "
                  << corpus.token_count(Split::test) << " test tokens\n";
    });

    // split
    double split_fraction = 0.1;
    auto* split_cmd = app.add_subcommand("split", "Re-tag the train/test split of a corpus");
    split_cmd->add_option("--corpus", corpus_path)->required();
    split_cmd->add_option("--test-fraction", split_fraction)->required();
    split_cmd->add_option("--seed", seed);
    split_cmd->add_option("--out", out_path)->required();
    split_cmd->callback([&] {
        Corpus corpus = load_corpus(corpus_path);
        split_corpus(corpus, split_fraction, seed);
        save_corpus(corpus, out_path);
    });

    // simulate
    int sim_k = 5, sim_v = 50, sim_stores = 20, sim_baskets = 200, sim_basket_size = 8;
    auto* sim_cmd = app.add_subcommand("simulate", "Draw a synthetic corpus from the generative model");
    sim_cmd->add_option("--k", sim_k);
    sim_cmd->add_option("--v", sim_v);
    sim_cmd->add_option("--stores", sim_stores);
    sim_cmd->add_option("--baskets", sim_baskets, "baskets per store");
    sim_cmd->add_option("--basket-size", sim_basket_size);
    sim_cmd->add_option("--seed", seed);
    sim_cmd->add_option("--out", out_path, "output directory")->required();
    sim_cmd->callback([&] {
        StmConfig cfg;
        cfg.topics = sim_k;
        auto sim = simulate(cfg, sim_stores, sim_baskets, sim_basket_size, sim_v, seed);
        fs::create_directories(out_path);
        save_corpus(sim.corpus, (fs::path(out_path) / "corpus.json").string());
        StmFit truth;
        truth.config = cfg;
        truth.config.resolve(sim_v);
        truth.samples.push_back({sim.phi, sim.theta, 0, 0});
        save_stm_fit(truth, (fs::path(out_path) / "truth.json").string());
        std::cout << "simulated " << sim.corpus.n_transactions() << " baskets\n";
    });

    // fit-stm
    StmConfig fit_cfg;
    fit_cfg.iters = 2000;
    fit_cfg.burn_in = 1000;
    fit_cfg.thin = 200;
    int threads = 0;
    auto* fit_cmd = app.add_subcommand("fit-stm", "Run the collapsed block Gibbs sampler");
    fit_cmd->add_option("--corpus", corpus_path)->required();
    fit_cmd->add_option("--k", fit_cfg.topics)->required();
    fit_cmd->add_option("--iters", fit_cfg.iters);
    fit_cmd->add_option("--burn-in", fit_cfg.burn_in);
    fit_cmd->add_option("--thin", fit_cfg.thin);
    fit_cmd->add_option("--chains", fit_cfg.chains);
    fit_cmd->add_option("--seed", fit_cfg.seed);
    fit_cmd->add_option("--threads", threads);
    fit_cmd->add_option("--out", out_path, "output directory")->required();
    fit_cmd->callback([&] {
        Corpus corpus = load_corpus(corpus_path);
        fit_cfg.threads = threads;
        StmFit fit = run_chains(corpus, fit_cfg);
        fs::create_directories(out_path);
        save_stm_fit(fit, (fs::path(out_path) / "samples.json").string());
        std::cout << fit.samples.size() << " posterior samples";
        if (fit.rhat_log_prob) std::cout << ", rhat(log p) = " << *fit.rhat_log_prob;
        std::cout << "\n";
    });

    // summarize-topics
    std::string samples_dir;
    double threshold = 0.35;
    int min_size = 10;
    auto* sum_cmd = app.add_subcommand("summarize-topics",
                                       "Cluster topics pooled over posterior samples");
    sum_cmd->add_option("--samples", samples_dir, "fit-stm output directory")->required();
    sum_cmd->add_option("--threshold", threshold, "cosine distance threshold");
    sum_cmd->add_option("--min-size", min_size, "minimum cluster size");
    sum_cmd->add_option("--out", out_path)->required();
    sum_cmd->callback([&] {
        StmFit fit = load_stm_fit((fs::path(samples_dir) / "samples.json").string());
        auto clusters = select(cluster(make_bag(fit.samples), threshold), min_size);
        save_clusters(clusters, threshold, out_path);
        std::cout << clusters.size() << " clustered topics\n";
    });

    // grid
    std::vector<double> grid_thresholds;
    std::vector<int> grid_min_sizes;
    StmConfig grid_refit;
    grid_refit.chains = 1;
    grid_refit.iters = 3000;
    grid_refit.burn_in = 1000;
    grid_refit.thin = 200;
    auto* grid_cmd = app.add_subcommand("grid", "Evaluate (threshold, min size) grid cells");
    grid_cmd->add_option("--samples", samples_dir)->required();
    grid_cmd->add_option("--corpus", corpus_path)->required();
    grid_cmd->add_option("--thresholds", grid_thresholds)->required()->expected(-1);
    grid_cmd->add_option("--min-sizes", grid_min_sizes)->required()->expected(-1);
    grid_cmd->add_option("--refit-iters", grid_refit.iters);
    grid_cmd->add_option("--refit-burn-in", grid_refit.burn_in);
    grid_cmd->add_option("--refit-thin", grid_refit.thin);
    grid_cmd->add_option("--seed", grid_refit.seed);
    grid_cmd->add_option("--threads", threads);
    grid_cmd->add_option("--out", out_path, "grid CSV")->required();
    grid_cmd->callback([&] {
        StmFit fit = load_stm_fit((fs::path(samples_dir) / "samples.json").string());
        Corpus corpus = load_corpus(corpus_path);
        GridEvalConfig cfg;
        cfg.refit = grid_refit;
        cfg.refit.discount = fit.config.discount;
        cfg.refit.strength = fit.config.strength;
        cfg.threads = threads;
        auto rows = grid_evaluate(make_bag(fit.samples), grid_thresholds, grid_min_sizes,
                                  corpus, cfg);
        save_grid_csv(rows, out_path);
    });

    // refit-theta
    std::string topics_path;
    StmConfig refit_cfg;
    refit_cfg.chains = 1;
    refit_cfg.iters = 15500;
    refit_cfg.burn_in = 1000;
    refit_cfg.thin = 500;
    auto* refit_cmd = app.add_subcommand("refit-theta",
                                         "Refit store mixtures with fixed clustered topics");
    refit_cmd->add_option("--corpus", corpus_path)->required();
    refit_cmd->add_option("--topics", topics_path, "clustered topics JSON")->required();
    refit_cmd->add_option("--iters", refit_cfg.iters);
    refit_cmd->add_option("--burn-in", refit_cfg.burn_in);
    refit_cmd->add_option("--thin", refit_cfg.thin);
    refit_cmd->add_option("--chains", refit_cfg.chains);
    refit_cmd->add_option("--seed", refit_cfg.seed);
    refit_cmd->add_option("--out", out_path)->required();
    refit_cmd->callback([&] {
        Corpus corpus = load_corpus(corpus_path);
        const Eigen::MatrixXd phi = clusters_to_phi(load_clusters(topics_path));
        RefitResult refit = refit_fixed_topics(corpus, phi, refit_cfg);
        save_refit(refit, corpus.store_ids, out_path);
        std::cout << refit.theta_samples.size() << " theta samples\n";
    });

    // eval-topics
    std::string theta_path, heldout_path;
    int top_n = 15;
    auto* eval_cmd = app.add_subcommand("eval-topics", "Topic quality metrics CSV");
    eval_cmd->add_option("--topics", topics_path)->required();
    eval_cmd->add_option("--corpus", corpus_path)->required();
    eval_cmd->add_option("--heldout", heldout_path, "corpus with test tags (defaults to --corpus)");
    eval_cmd->add_option("--theta", theta_path, "refit output for perplexity");
    eval_cmd->add_option("--top-n", top_n);
    eval_cmd->add_option("--out", out_path)->required();
    eval_cmd->callback([&] {
        Corpus corpus = load_corpus(corpus_path);
        auto clusters = load_clusters(topics_path);
        std::ostringstream csv;
        csv << "cluster,size,npmi,distinctiveness\n";
        for (std::size_t i = 0; i < clusters.size(); ++i) {
            std::vector<Eigen::VectorXd> peers;
            for (std::size_t j = 0; j < clusters.size(); ++j)
                if (j != i) peers.push_back(clusters[j].mean);
            auto dist = distinctiveness(clusters[i].mean, peers);
            csv << i << ',' << clusters[i].size << ','
                << format_double(npmi(clusters[i].mean, corpus, top_n)) << ','
                << format_double(dist ? *dist : std::numeric_limits<double>::quiet_NaN()) << '\n';
        }
        if (!theta_path.empty()) {
            Corpus heldout = heldout_path.empty() ? corpus : load_corpus(heldout_path);
            const Eigen::MatrixXd theta = load_theta_mean(theta_path, nullptr);
            csv << "perplexity,,"
                << format_double(perplexity(heldout, Split::test, clusters_to_phi(clusters),
                                            theta, 0.5, 3.0))
                << ",\n";
        }
        std::ofstream out(out_path, std::ios::binary);
        out << csv.str();
    });

    // fit-gp
    std::string values_path;
    GPMcmcConfig gp_mcmc;
    auto* gp_cmd = app.add_subcommand("fit-gp", "Linear Gaussian-process regression per topic");
    gp_cmd->add_option("--values", values_path, "store_id,theta CSV")->required();
    gp_cmd->add_option("--stores", stores_path, "store metadata CSV")->required();
    gp_cmd->add_option("--chains", gp_mcmc.chains);
    gp_cmd->add_option("--iters", gp_mcmc.iters);
    gp_cmd->add_option("--burn-in", gp_mcmc.burn_in);
    gp_cmd->add_option("--thin", gp_mcmc.thin);
    gp_cmd->add_option("--seed", gp_mcmc.seed);
    gp_cmd->add_option("--out", out_path, "output directory")->required();
    gp_cmd->callback([&] {
        const auto stores = load_stores_csv(stores_path);
        GPDataset data = build_dataset(stores, load_values_csv(values_path));
        GPPriors priors;
        const GPDraws draws = sample_posterior(data, priors, gp_mcmc);
        fs::create_directories(out_path);
        save_gp_draws(draws, (fs::path(out_path) / "gp_draws.json").string());
        save_coefficient_csv(draws, (fs::path(out_path) / "coefficients.csv").string());
        const Decomposition decomposition = decompose(data, draws);
        save_residual_csv(data, stores_by_ids(stores, data.store_ids), decomposition,
                          (fs::path(out_path) / "residuals.csv").string());
        for (const auto& [param, value] : draws.rhat)
            std::cout << "rhat " << param << " = " << value << "\n";
    });

    // predict-gp
    std::string draws_path, train_values_path;
    auto* pred_cmd = app.add_subcommand("predict-gp", "Posterior predictions at new stores");
    pred_cmd->add_option("--draws", draws_path)->required();
    pred_cmd->add_option("--train-values", train_values_path, "store_id,theta CSV used in the fit")
        ->required();
    pred_cmd->add_option("--stores", stores_path)->required();
    pred_cmd->add_option("--new-stores", values_path, "metadata CSV of prediction locations")
        ->required();
    pred_cmd->add_option("--out", out_path)->required();
    pred_cmd->callback([&] {
        const auto stores = load_stores_csv(stores_path);
        GPDataset train = build_dataset(stores, load_values_csv(train_values_path));
        const auto train_stores = stores_by_ids(stores, train.store_ids);
        const auto new_stores = load_stores_csv(values_path);
        GPQuery query;
        query.X = design_matrix(new_stores);
        query.cross_dist = cross_distance_matrix(new_stores, train_stores);
        query.dist = distance_matrix(new_stores);
        const GPDraws draws = load_gp_draws(draws_path);
        const Prediction pred = predict(train, draws, query);
        std::ostringstream csv;
        csv << "store_id,mean,lower95,upper95,mean_prob\n";
        for (std::size_t i = 0; i < new_stores.size(); ++i) {
            const auto idx = static_cast<Eigen::Index>(i);
            csv << new_stores[i].store_id << ',' << format_double(pred.mean[idx]) << ','
                << format_double(pred.lower95[idx]) << ',' << format_double(pred.upper95[idx])
                << ',' << format_double(inv_logit(pred.mean[idx])) << '\n';
        }
        std::ofstream out(out_path, std::ios::binary);
        out << csv.str();
    });

    // compare-gp-lr
    double compare_fraction = 0.2;
    auto* cmp_cmd = app.add_subcommand("compare-gp-lr",
                                       "Held-out MSE and lppd, LGPR vs linear regression");
    cmp_cmd->add_option("--values", values_path)->required();
    cmp_cmd->add_option("--stores", stores_path)->required();
    cmp_cmd->add_option("--test-fraction", compare_fraction);
    cmp_cmd->add_option("--chains", gp_mcmc.chains);
    cmp_cmd->add_option("--iters", gp_mcmc.iters);
    cmp_cmd->add_option("--burn-in", gp_mcmc.burn_in);
    cmp_cmd->add_option("--thin", gp_mcmc.thin);
    cmp_cmd->add_option("--seed", gp_mcmc.seed);
    cmp_cmd->add_option("--out", out_path)->required();
    cmp_cmd->callback([&] {
        const auto stores = load_stores_csv(stores_path);
        GPDataset all = build_dataset(stores, load_values_csv(values_path));
        const auto matched = stores_by_ids(stores, all.store_ids);
        std::vector<std::size_t> order(matched.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(gp_mcmc.seed);
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t n_test = std::max<std::size_t>(
            1, static_cast<std::size_t>(compare_fraction * static_cast<double>(matched.size())));
        n_test = std::min(n_test, matched.size() - 2);
        std::vector<StoreGeo> train_stores, test_stores;
        std::vector<double> y_train, y_test;
        for (std::size_t i = 0; i < matched.size(); ++i) {
            const bool test = std::find(order.begin(), order.begin() + n_test, i) !=
                              order.begin() + n_test;
            (test ? test_stores : train_stores).push_back(matched[i]);
            (test ? y_test : y_train).push_back(all.y[static_cast<Eigen::Index>(i)]);
        }
        GPDataset train;
        train.y = Eigen::Map<Eigen::VectorXd>(y_train.data(), y_train.size());
        train.X = design_matrix(train_stores);
        train.dist = distance_matrix(train_stores);
        GPQuery heldout;
        heldout.X = design_matrix(test_stores);
        heldout.cross_dist = cross_distance_matrix(test_stores, train_stores);
        heldout.dist = distance_matrix(test_stores);
        GPPriors priors;
        const GPDraws gp_draws = sample_posterior(train, priors, gp_mcmc);
        const GPDraws lr_draws = fit_lr_baseline(train, priors, gp_mcmc);
        const Eigen::VectorXd y =
            Eigen::Map<Eigen::VectorXd>(y_test.data(), static_cast<Eigen::Index>(y_test.size()));
        const ComparisonResult result = compare(train, gp_draws, lr_draws, heldout, y);
        save_comparison_csv({{"topic", result}}, out_path);
        std::cout << "LGPR mse " << result.mse_a << " vs LR " << result.mse_b
                  << " (p=" << result.p_mse << "); lppd " << result.lppd_a << " vs "
                  << result.lppd_b << " (p=" << result.p_lppd << ")\n";
    });

    // export-map
    auto* map_cmd = app.add_subcommand("export-map", "GeoJSON point collection of per-store values");
    std::string scale = "raw";
    map_cmd->add_option("--values", values_path, "store_id,value CSV")->required();
    map_cmd->add_option("--stores", stores_path)->required();
    map_cmd->add_option("--scale", scale, "raw | logit | probability");
    map_cmd->add_option("--out", out_path)->required();
    map_cmd->callback([&] {
        auto values = load_values_csv(values_path);
        for (auto& [id, v] : values) {
            if (scale == "logit") v = logit(v);
            else if (scale == "probability") v = inv_logit(v);
        }
        const auto report = export_map(values, load_stores_csv(stores_path), out_path);
        std::cout << report.n_features << " features";
        if (!report.skipped.empty()) std::cout << ", " << report.skipped.size() << " skipped";
        std::cout << "\n";
    });

    // align-topics
    std::string topics_a_path, topics_b_path;
    auto* align_cmd = app.add_subcommand(
        "align-topics", "Greedy pairing of two clustered-topic sets by cosine similarity");
    align_cmd->add_option("--a", topics_a_path, "clustered topics JSON")->required();
    align_cmd->add_option("--b", topics_b_path, "clustered topics JSON")->required();
    align_cmd->add_option("--out", out_path, "pairs CSV")->required();
    align_cmd->callback([&] {
        const Eigen::MatrixXd a = clusters_to_phi(load_clusters(topics_a_path));
        const Eigen::MatrixXd b = clusters_to_phi(load_clusters(topics_b_path));
        const AlignmentResult alignment = align_greedy(a, b);
        std::ostringstream csv;
        csv << "index_a,index_b,cosine_similarity\n";
        for (const auto& p : alignment.pairs)
            csv << p.index_a << ',' << p.index_b << ',' << format_double(p.similarity) << '\n';
        for (int u : alignment.unmatched)
            csv << (a.rows() >= b.rows() ? u : -1) << ','
                << (a.rows() >= b.rows() ? -1 : u) << ",\n";
        std::ofstream out(out_path, std::ios::binary);
        out << csv.str();
        std::cout << alignment.pairs.size() << " pairs, " << alignment.unmatched.size()
                  << " unmatched\n";
    });

    // export-distances
    auto* dist_cmd = app.add_subcommand("export-distances",
                                        "Pairwise great-circle distance matrix CSV");
    dist_cmd->add_option("--stores", stores_path)->required();
    dist_cmd->add_option("--out", out_path)->required();
    dist_cmd->callback([&] {
        const auto stores = load_stores_csv(stores_path);
        const Eigen::MatrixXd dist = distance_matrix(stores);
        std::ostringstream csv;
        csv << "store_id";
        for (const auto& s : stores) csv << ',' << s.store_id;
        csv << '\n';
        for (std::size_t i = 0; i < stores.size(); ++i) {
            csv << stores[i].store_id;
            for (std::size_t j = 0; j < stores.size(); ++j)
                csv << ',' << format_double(dist(static_cast<Eigen::Index>(i),
                                                 static_cast<Eigen::Index>(j)));
            csv << '\n';
        }
        std::ofstream out(out_path, std::ios::binary);
        out << csv.str();
    });

    // run-pipeline
    std::string config_path;
    auto* pipe_cmd = app.add_subcommand("run-pipeline", "Run every stage from a config file");
    pipe_cmd->add_option("--config", config_path)->required();
    pipe_cmd->callback([&] {
        const Manifest manifest = run_pipeline(load_pipeline_config(config_path));
        std::cout << "pipeline complete, " << manifest.artifacts.size() << " artifacts\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
