// Command-line front end: elicit / fit / simulate / diagnose.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lcar/lcar.hpp"

namespace {

using nlohmann::json;

std::vector<std::string> g_argv;

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

json base_manifest(const std::string& command) {
    json m;
    m["command"] = command;
    m["argv"] = g_argv;
    m["version"] = LCAR_VERSION;
    m["timestamp"] = timestamp_utc();
    return m;
}

void add_input_hash(json& manifest, const std::string& label, const std::string& path) {
    manifest["inputs"][label]["path"] = path;
    manifest["inputs"][label]["hash"] = lcar::file_hash_hex(path);
}

void write_manifest(const std::string& dir, const json& manifest) {
    lcar::write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

json standardisation_json(const lcar::Standardisation& s) {
    json out;
    out["names"] = s.names;
    for (Eigen::Index i = 0; i < s.means.size(); ++i) {
        out["means"].push_back(s.means[i]);
        out["sds"].push_back(s.sds[i]);
    }
    if (s.means.size() == 0) {
        out["means"] = json::array();
        out["sds"] = json::array();
    }
    return out;
}

json vector_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

lcar::ModelKind parse_model(const std::string& name) {
    if (name == "lcar") return lcar::ModelKind::Lcar;
    if (name == "iar") return lcar::ModelKind::Iar;
    if (name == "bym") return lcar::ModelKind::Bym;
    throw lcar::InvalidArgument("unknown model '" + name + "' (use lcar, iar or bym)");
}

// ------------------------------------------------------------
// elicit
// ------------------------------------------------------------

struct ElicitArgs {
    std::string adjacency;
    std::vector<std::string> prior;
    std::string covariates;
    std::string out;
    double epsilon = 1e-3;
    std::string beta_scale = "pooled";
    bool refresh_per_trial = false;
    int threads = 0;
};

int run_elicit(const ElicitArgs& args) {
    auto cov = lcar::ingest_covariates(args.covariates);
    const int n = static_cast<int>(cov.data.X.rows());
    const auto adj = std::make_shared<const lcar::AdjacencyStructure>(
        lcar::ingest_adjacency(args.adjacency, n));
    const auto counts = lcar::ingest_prior_counts(args.prior, n);
    std::vector<bool> corrected;
    const lcar::PriorData prior = lcar::prior_from_counts(counts, cov.data.X, &corrected);

    lcar::ElicitationOptions options;
    options.epsilon = args.epsilon;
    options.beta_mean_scale = args.beta_scale == "period" ? lcar::BetaMeanScale::MeanOverPeriods
                                                          : lcar::BetaMeanScale::PooledOverUnits;
    options.refresh_estimates_per_trial = args.refresh_per_trial;
    options.num_threads = args.threads;

    const auto [seq, trace] = lcar::elicit_sequence(adj, prior, options);
    lcar::write_sequence(args.out, seq, trace, args.epsilon);

    json manifest = base_manifest("elicit");
    add_input_hash(manifest, "adjacency", args.adjacency);
    add_input_hash(manifest, "covariates", args.covariates);
    for (std::size_t p = 0; p < args.prior.size(); ++p) {
        add_input_hash(manifest, "prior_" + std::to_string(p + 1), args.prior[p]);
    }
    manifest["config"]["epsilon"] = args.epsilon;
    manifest["config"]["beta_scale"] = args.beta_scale;
    manifest["config"]["refresh_per_trial"] = args.refresh_per_trial;
    manifest["adjacency_hash"] = adj->hash();
    manifest["standardisation"] = standardisation_json(cov.standardisation);
    manifest["zero_count_correction"] = corrected;
    write_manifest(args.out, manifest);

    std::cout << "elicited " << seq.num_edges() << " removal steps into " << args.out << "\n";
    return 0;
}

// ------------------------------------------------------------
// fit
// ------------------------------------------------------------

struct FitArgs {
    std::string model = "lcar";
    std::string data;
    std::string adjacency;
    std::string sequence;
    std::string out;
    int chains = 3;
    long burnin = 100000;
    long keep = 50000;
    int thin = 1;
    int q = 5;
    double epsilon = 1e-3;
    std::uint64_t seed = 1;
    int threads = 0;
};

int run_fit(const FitArgs& args) {
    const lcar::ModelKind kind = parse_model(args.model);
    auto ingested = lcar::ingest_dataset(args.data);
    const int n = ingested.data.n_units();
    const auto adj = std::make_shared<const lcar::AdjacencyStructure>(
        lcar::ingest_adjacency(args.adjacency, n));

    std::unique_ptr<lcar::CandidateSequence> seq;
    if (kind == lcar::ModelKind::Lcar) {
        if (args.sequence.empty()) {
            throw lcar::InvalidArgument("--sequence is required for the lcar model");
        }
        auto [loaded, eps_elicited] = lcar::read_sequence(args.sequence, adj);
        seq = std::make_unique<lcar::CandidateSequence>(std::move(loaded));
        lcar::ensure_logdet_cache(*seq, args.epsilon);
    }

    lcar::SamplerConfig config;
    config.n_chains = args.chains;
    config.burn_in = args.burnin;
    config.keep = args.keep;
    config.thin = args.thin;
    config.q = args.q;
    config.epsilon = args.epsilon;
    config.seed = args.seed;
    config.num_threads = args.threads;
    config.store_phi = false;

    std::filesystem::create_directories(args.out);
    std::vector<std::unique_ptr<std::ofstream>> phi_files;
    for (int c = 0; c < args.chains; ++c) {
        phi_files.push_back(std::make_unique<std::ofstream>(
            args.out + "/phi_chain_" + std::to_string(c + 1) + ".bin", std::ios::binary));
    }
    lcar::PhiSink sink = [&](int chain, long, const Eigen::VectorXd& phi) {
        auto& out = *phi_files[static_cast<std::size_t>(chain)];
        for (Eigen::Index i = 0; i < phi.size(); ++i) {
            const double v = phi[i];
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    };

    const lcar::PosteriorSamples samples =
        lcar::run_chains(ingested.data, kind, seq.get(), adj.get(), config, sink);
    phi_files.clear();

    for (int c = 0; c < args.chains; ++c) {
        lcar::write_chain(args.out, c, samples.chains[static_cast<std::size_t>(c)], kind,
                          args.thin);
    }

    json summary;
    summary["model"] = args.model;
    summary["n"] = n;
    summary["num_edges"] = adj->num_edges();
    summary["kept_per_chain"] = samples.kept_per_chain();
    summary["thin"] = args.thin;
    summary["epsilon"] = args.epsilon;
    summary["covariate_names"] = ingested.data.covariate_names;
    summary["standardisation"] = standardisation_json(ingested.standardisation);
    summary["posterior_mean"]["beta"] = vector_json(samples.posterior_mean_beta());
    summary["posterior_mean"]["phi"] = vector_json(samples.posterior_mean_phi());
    if (kind == lcar::ModelKind::Bym) {
        summary["posterior_mean"]["theta"] = vector_json(samples.posterior_mean_theta());
    }
    summary["posterior_mean"]["fitted"] = vector_json(samples.posterior_mean_fitted());
    for (std::size_t c = 0; c < samples.chains.size(); ++c) {
        json acc;
        acc["phi"] = samples.chains[c].accept_phi;
        acc["beta"] = samples.chains[c].accept_beta;
        if (kind == lcar::ModelKind::Lcar) {
            acc["candidate"] = samples.chains[c].accept_candidate;
            acc["level"] = samples.chains[c].accept_level;
        }
        if (kind == lcar::ModelKind::Bym) acc["theta"] = samples.chains[c].accept_theta;
        summary["acceptance"].push_back(acc);
    }
    if (args.chains > 1) {
        std::vector<std::vector<double>> dev;
        for (const auto& chain : samples.chains) {
            dev.emplace_back(chain.deviance.data(), chain.deviance.data() + chain.deviance.size());
        }
        summary["psrf"]["deviance"] = lcar::potential_scale_reduction(dev);
        for (int b = 0; b < samples.n_coefficients; ++b) {
            std::vector<std::vector<double>> draws;
            for (const auto& chain : samples.chains) {
                std::vector<double> col(static_cast<std::size_t>(chain.beta.rows()));
                for (Eigen::Index i = 0; i < chain.beta.rows(); ++i) {
                    col[static_cast<std::size_t>(i)] = chain.beta(i, b);
                }
                draws.push_back(std::move(col));
            }
            summary["psrf"]["beta" + std::to_string(b)] = lcar::potential_scale_reduction(draws);
        }
        std::vector<std::vector<double>> tau;
        for (const auto& chain : samples.chains) {
            tau.emplace_back(chain.tau2.data(), chain.tau2.data() + chain.tau2.size());
        }
        summary["psrf"]["tau2"] = lcar::potential_scale_reduction(tau);
    }
    lcar::write_text_file(args.out + "/summary.json", summary.dump(2) + "\n");

    json manifest = base_manifest("fit");
    add_input_hash(manifest, "data", args.data);
    add_input_hash(manifest, "adjacency", args.adjacency);
    if (!args.sequence.empty()) {
        add_input_hash(manifest, "sequence", args.sequence + "/sequence.csv");
    }
    manifest["config"]["model"] = args.model;
    manifest["config"]["chains"] = args.chains;
    manifest["config"]["burnin"] = args.burnin;
    manifest["config"]["keep"] = args.keep;
    manifest["config"]["thin"] = args.thin;
    manifest["config"]["q"] = args.q;
    manifest["config"]["epsilon"] = args.epsilon;
    manifest["config"]["seed"] = args.seed;
    manifest["adjacency_hash"] = adj->hash();
    manifest["standardisation"] = standardisation_json(ingested.standardisation);
    write_manifest(args.out, manifest);

    std::cout << "fit " << args.model << ": " << args.chains << " chains, "
              << samples.kept_per_chain() << " kept draws each, written to " << args.out << "\n";
    return 0;
}

// ------------------------------------------------------------
// simulate
// ------------------------------------------------------------

struct SimulateArgs {
    std::vector<std::string> scenarios;
    int replicates = 50;
    int lattice = 8;
    std::uint64_t seed = 7;
    std::string out;
    int chains = 1;
    long burnin = 5000;
    long keep = 5000;
    int q = 5;
    double epsilon = 1e-3;
    std::string models = "iar,bym,lcar";
    int bootstrap = 1000;
    int threads = 0;
    bool write_replicates = true;
};

lcar::SimScenario parse_scenario(const std::string& text) {
    lcar::SimScenario s;
    std::stringstream ss(text);
    std::string part;
    bool have_m = false, have_e = false;
    while (std::getline(ss, part, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw lcar::InvalidArgument("bad scenario token '" + part + "'");
        const std::string key = part.substr(0, eq);
        const std::string value = part.substr(eq + 1);
        if (key == "M") {
            s.step_magnitude = std::stod(value);
            have_m = true;
        } else if (key == "E") {
            const auto dash = value.find('-');
            if (dash == std::string::npos) {
                throw lcar::InvalidArgument("scenario E wants a range like 50-100");
            }
            s.e_lo = std::stod(value.substr(0, dash));
            s.e_hi = std::stod(value.substr(dash + 1));
            have_e = true;
        } else {
            throw lcar::InvalidArgument("unknown scenario key '" + key + "'");
        }
    }
    if (!have_m || !have_e) throw lcar::InvalidArgument("scenario needs both M= and E=");
    return s;
}

std::vector<lcar::SimScenario> expand_scenarios(const std::vector<std::string>& texts) {
    std::vector<lcar::SimScenario> out;
    for (const auto& text : texts) {
        if (text == "all") {
            for (double m : {0.5, 1.0, 1.5}) {
                for (const auto& [lo, hi] :
                     std::vector<std::pair<double, double>>{{10, 25}, {50, 100}, {150, 250}}) {
                    lcar::SimScenario s;
                    s.step_magnitude = m;
                    s.e_lo = lo;
                    s.e_hi = hi;
                    out.push_back(s);
                }
            }
        } else {
            out.push_back(parse_scenario(text));
        }
    }
    return out;
}

void write_replicate_files(const std::string& dir, const lcar::SimulatedReplicate& rep) {
    std::ostringstream data;
    data << "unit,observed,expected,x1\n";
    for (int k = 0; k < rep.study.n_units(); ++k) {
        data << (k + 1) << ',' << static_cast<long>(rep.study.y[k]) << ','
             << lcar::format_double(rep.study.expected[k]) << ','
             << lcar::format_double(rep.study.X(k, 1)) << '\n';
    }
    lcar::write_text_file(dir + "/data.csv", data.str());

    std::ostringstream truth;
    truth << "unit,phi,log_risk,fitted\n";
    for (int k = 0; k < rep.study.n_units(); ++k) {
        truth << (k + 1) << ',' << lcar::format_double(rep.truth.phi[k]) << ','
              << lcar::format_double(rep.truth.log_risk[k]) << ','
              << lcar::format_double(rep.truth.fitted[k]) << '\n';
    }
    lcar::write_text_file(dir + "/truth.csv", truth.str());

    for (std::size_t p = 0; p < rep.prior_counts.size(); ++p) {
        std::ostringstream prior;
        prior << "unit,observed,expected\n";
        for (int k = 0; k < rep.study.n_units(); ++k) {
            prior << (k + 1) << ',' << static_cast<long>(rep.prior_counts[p].first[k]) << ','
                  << lcar::format_double(rep.prior_counts[p].second[k]) << '\n';
        }
        lcar::write_text_file(dir + "/prior_" + std::to_string(p + 1) + ".csv", prior.str());
    }
}

int run_simulate(const SimulateArgs& args) {
    lcar::ScenarioConfig config;
    config.scenarios = expand_scenarios(args.scenarios);
    config.replicates = args.replicates;
    config.lattice_side = args.lattice;
    config.seed = args.seed;
    config.n_bootstrap = args.bootstrap;
    config.num_threads = args.threads;
    config.fit.n_chains = args.chains;
    config.fit.burn_in = args.burnin;
    config.fit.keep = args.keep;
    config.fit.q = args.q;
    config.fit.epsilon = args.epsilon;
    config.fit.store_phi = false;

    config.models.clear();
    std::stringstream ss(args.models);
    std::string token;
    while (std::getline(ss, token, ',')) config.models.push_back(parse_model(token));

    if (args.write_replicates) {
        config.on_replicate = [&](const lcar::SimScenario& scenario, int rep,
                                  const lcar::SimulatedReplicate& data) {
            write_replicate_files(
                args.out + "/" + scenario.label() + "/rep_" + std::to_string(rep + 1), data);
        };
    }

    const auto results = lcar::run_scenarios(config);

    std::ostringstream rmse;
    rmse << "scenario,model,beta_rmse,beta_lower,beta_upper,fitted_rmse,fitted_lower,fitted_upper\n";
    for (const auto& result : results) {
        for (const auto& score : result.scores) {
            rmse << result.scenario.label() << ',' << lcar::model_name(score.model) << ','
                 << lcar::format_double(score.beta_rmse.rmse) << ','
                 << lcar::format_double(score.beta_rmse.lower) << ','
                 << lcar::format_double(score.beta_rmse.upper) << ','
                 << lcar::format_double(score.fitted_rmse.rmse) << ','
                 << lcar::format_double(score.fitted_rmse.lower) << ','
                 << lcar::format_double(score.fitted_rmse.upper) << '\n';
        }
    }
    lcar::write_text_file(args.out + "/rmse.csv", rmse.str());

    json manifest = base_manifest("simulate");
    for (const auto& result : results) manifest["config"]["scenarios"].push_back(result.scenario.label());
    manifest["config"]["replicates"] = args.replicates;
    manifest["config"]["lattice"] = args.lattice;
    manifest["config"]["seed"] = args.seed;
    manifest["config"]["chains"] = args.chains;
    manifest["config"]["burnin"] = args.burnin;
    manifest["config"]["keep"] = args.keep;
    manifest["config"]["q"] = args.q;
    manifest["config"]["epsilon"] = args.epsilon;
    manifest["config"]["models"] = args.models;
    manifest["config"]["bootstrap"] = args.bootstrap;
    write_manifest(args.out, manifest);

    std::cout << "simulated " << results.size() << " scenario(s) x " << args.replicates
              << " replicates into " << args.out << "\n";
    return 0;
}

// ------------------------------------------------------------
// diagnose
// ------------------------------------------------------------

struct DiagnoseArgs {
    std::string run;
    std::string data;
    std::string adjacency;
    int permutations = 10000;
    std::uint64_t seed = 1;
    std::string out;
};

int run_diagnose(const DiagnoseArgs& args) {
    const std::string out_dir = args.out.empty() ? args.run : args.out;
    const json summary = json::parse(lcar::read_text_file(args.run + "/summary.json"));
    const lcar::ModelKind kind = parse_model(summary.at("model").get<std::string>());
    const int n = summary.at("n").get<int>();
    const int num_edges = summary.at("num_edges").get<int>();

    auto ingested = lcar::ingest_dataset(args.data);
    if (ingested.data.n_units() != n) {
        throw lcar::InconsistentUnits("run was fitted on n=" + std::to_string(n) +
                                      " but the data file has n=" +
                                      std::to_string(ingested.data.n_units()));
    }
    const auto adj = lcar::ingest_adjacency(args.adjacency, n);

    lcar::PosteriorSamples samples = lcar::read_chains(args.run, kind, n, num_edges);
    const Eigen::VectorXd beta_mean = vector_from_json(summary.at("posterior_mean").at("beta"));
    const Eigen::VectorXd phi_mean = vector_from_json(summary.at("posterior_mean").at("phi"));
    const Eigen::VectorXd fitted_mean = vector_from_json(summary.at("posterior_mean").at("fitted"));
    Eigen::VectorXd theta_mean = Eigen::VectorXd::Zero(n);
    if (summary.at("posterior_mean").contains("theta")) {
        theta_mean = vector_from_json(summary.at("posterior_mean").at("theta"));
    }
    for (auto& chain : samples.chains) {
        chain.phi_mean = phi_mean;
        chain.theta_mean = theta_mean;
        chain.fitted_mean = fitted_mean;
        chain.beta_mean = beta_mean;
    }

    json report;
    const auto dic_result = lcar::dic(samples, ingested.data);
    report["dic"] = dic_result.dic;
    report["p_d"] = dic_result.p_d;
    report["mean_deviance"] = dic_result.mean_deviance;

    const Eigen::VectorXd residuals = lcar::pearson_residuals(ingested.data, fitted_mean);
    lcar::RngStream perm_rng = lcar::RngStream::substream(args.seed, "moran");
    const auto moran = lcar::morans_i_test(residuals, adj, args.permutations, perm_rng);
    report["moran_i"] = moran.statistic;
    report["moran_p"] = moran.p_value;
    report["residual_type"] = "pearson_at_posterior_mean";

    const auto& std_json = summary.at("standardisation");
    std::vector<std::string> names = std_json.at("names").get<std::vector<std::string>>();
    if (!names.empty()) {
        const Eigen::VectorXd sds = vector_from_json(std_json.at("sds"));
        const auto risks = lcar::relative_risks(samples, names, sds);
        for (const auto& rr : risks) {
            json entry;
            entry["covariate"] = rr.name;
            entry["increment_sd"] = rr.increment;
            entry["median"] = rr.median;
            entry["lower"] = rr.lower;
            entry["upper"] = rr.upper;
            report["relative_risks"].push_back(entry);
        }
        report["overdispersion_covariate_only"] = lcar::overdispersion(ingested.data);
    }

    if (kind == lcar::ModelKind::Lcar) {
        const auto density = lcar::edges_removed_density(samples);
        const auto [lo, hi] = lcar::edges_removed_interval(density, 0.95);
        report["edges_removed_interval_95"] = {lo, hi};
        std::ostringstream csv;
        csv << "removed";
        for (std::size_t c = 0; c < samples.chains.size(); ++c) csv << ",chain" << (c + 1);
        csv << ",pooled\n";
        for (int k = 0; k <= density.num_edges; ++k) {
            csv << k;
            for (Eigen::Index c = 0; c < density.per_chain.rows(); ++c) {
                csv << ',' << lcar::format_double(density.per_chain(c, k));
            }
            csv << ',' << lcar::format_double(density.pooled[k]) << '\n';
        }
        lcar::write_text_file(out_dir + "/edges_removed_density.csv", csv.str());
    }

    lcar::write_text_file(out_dir + "/diagnostics.json", report.dump(2) + "\n");

    json manifest = base_manifest("diagnose");
    add_input_hash(manifest, "data", args.data);
    add_input_hash(manifest, "adjacency", args.adjacency);
    add_input_hash(manifest, "run_summary", args.run + "/summary.json");
    manifest["config"]["permutations"] = args.permutations;
    manifest["config"]["seed"] = args.seed;
    // Kept separate so a fit run's own manifest survives in-place diagnosis.
    lcar::write_text_file(out_dir + "/diagnostics_manifest.json", manifest.dump(2) + "\n");

    std::cout << "diagnostics written to " << out_dir << "\n";
    return 0;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"Localised conditional autoregression for areal count data"};
    app.set_version_flag("--version", std::string("lcar ") + LCAR_VERSION);
    app.set_config("--config");
    app.require_subcommand(1);

    ElicitArgs elicit;
    auto* elicit_cmd =
        app.add_subcommand("elicit", "Elicit the candidate edge-removal sequence from prior data");
    elicit_cmd->add_option("--adjacency", elicit.adjacency, "Edge list CSV (from,to)")->required();
    elicit_cmd->add_option("--prior", elicit.prior, "Prior period CSVs (unit,observed,expected)")
        ->required()
        ->expected(-1);
    elicit_cmd->add_option("--covariates", elicit.covariates, "Covariate CSV (unit,...)")->required();
    elicit_cmd->add_option("--epsilon", elicit.epsilon, "Diagonal dominance constant");
    elicit_cmd->add_option("--beta-scale", elicit.beta_scale, "pooled (default) or period");
    elicit_cmd->add_flag("--refresh-per-trial", elicit.refresh_per_trial,
                         "Recompute estimates for every trial edge (slow validation mode)");
    elicit_cmd->add_option("--threads", elicit.threads, "Worker threads (0 = hardware)");
    elicit_cmd->add_option("--out", elicit.out, "Output directory")->required();

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Run the MCMC sampler");
    fit_cmd->add_option("--model", fit.model, "lcar, iar or bym")->required();
    fit_cmd->add_option("--data", fit.data, "Dataset CSV (unit,observed,expected,cov...)")->required();
    fit_cmd->add_option("--adjacency", fit.adjacency, "Edge list CSV")->required();
    fit_cmd->add_option("--sequence", fit.sequence, "Elicited sequence directory (lcar only)");
    fit_cmd->add_option("--chains", fit.chains, "Number of chains");
    fit_cmd->add_option("--burnin", fit.burnin, "Burn-in iterations");
    fit_cmd->add_option("--keep", fit.keep, "Post burn-in iterations");
    fit_cmd->add_option("--thin", fit.thin, "Thinning interval");
    fit_cmd->add_option("--q", fit.q, "Candidate window half-width");
    fit_cmd->add_option("--epsilon", fit.epsilon, "Diagonal dominance constant");
    fit_cmd->add_option("--seed", fit.seed, "Master RNG seed");
    fit_cmd->add_option("--threads", fit.threads, "Worker threads (0 = hardware)");
    fit_cmd->add_option("--out", fit.out, "Output directory")->required();

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Run the simulation study");
    sim_cmd->add_option("--scenario", sim.scenarios, "M=<v>,E=<lo>-<hi> (repeatable) or 'all'")
        ->required()
        ->expected(-1);
    sim_cmd->add_option("--replicates", sim.replicates, "Replicates per scenario");
    sim_cmd->add_option("--lattice", sim.lattice, "Lattice side length");
    sim_cmd->add_option("--seed", sim.seed, "Master RNG seed");
    sim_cmd->add_option("--chains", sim.chains, "Chains per fit");
    sim_cmd->add_option("--burnin", sim.burnin, "Burn-in iterations per fit");
    sim_cmd->add_option("--keep", sim.keep, "Kept iterations per fit");
    sim_cmd->add_option("--q", sim.q, "Candidate window half-width");
    sim_cmd->add_option("--epsilon", sim.epsilon, "Diagonal dominance constant");
    sim_cmd->add_option("--models", sim.models, "Comma list of models to fit");
    sim_cmd->add_option("--bootstrap", sim.bootstrap, "Bootstrap resamples for the intervals");
    sim_cmd->add_option("--threads", sim.threads, "Worker threads (0 = hardware)");
    sim_cmd->add_flag("!--no-replicate-files", sim.write_replicates,
                      "Skip writing per-replicate datasets");
    sim_cmd->add_option("--out", sim.out, "Output directory")->required();

    DiagnoseArgs diag;
    auto* diag_cmd = app.add_subcommand("diagnose", "Model fit diagnostics for a finished run");
    diag_cmd->add_option("--run", diag.run, "Fit output directory")->required();
    diag_cmd->add_option("--data", diag.data, "Dataset CSV used for the fit")->required();
    diag_cmd->add_option("--adjacency", diag.adjacency, "Edge list CSV")->required();
    diag_cmd->add_option("--permutations", diag.permutations, "Permutations for Moran's I");
    diag_cmd->add_option("--seed", diag.seed, "RNG seed for permutations");
    diag_cmd->add_option("--out", diag.out, "Output directory (default: run directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (elicit_cmd->parsed()) return run_elicit(elicit);
    if (fit_cmd->parsed()) return run_fit(fit);
    if (sim_cmd->parsed()) return run_simulate(sim);
    return run_diagnose(diag);
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 0; i < argc; ++i) g_argv.emplace_back(argv[i]);
    try {
        return dispatch(argc, argv);
    } catch (const lcar::Error& e) {
        const std::string& code = e.code();
        const bool numerical = code == "NotPositiveDefinite" || code == "NonConvergence" ||
                               code == "SingularCovariance" || code == "NoBracket" ||
                               code == "ConstantResiduals";
        std::cerr << "error [" << code << "]: " << e.what() << "\n";
        return numerical ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
