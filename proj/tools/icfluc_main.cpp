// Command-line front end: ingest, fit, sample, eval, baseline, tica and the
// one-shot run pipeline. Each subcommand writes machine-readable CSV/JSON
// artifacts stamped with the config hash.

#include "icfluc/geometry.hpp"
#include "icfluc/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

using namespace icfluc;

std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void add_fit_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--a", cfg.a, "kappa-prior strength");
    cmd->add_option("--target-source", cfg.target_source,
                    "constraint targets: from-data, file or uniform");
    cmd->add_option("--target-file", cfg.target_file, "per-atom target CSV (atom,c)");
    cmd->add_option("--target-value", cfg.target_value, "uniform target (A^2)");
    cmd->add_option("--tol", cfg.tol, "max relative constraint residual");
    cmd->add_option("--max-iters", cfg.max_iters, "solver iteration cap");
    cmd->add_option("--damping", cfg.damping, "multiplicative update exponent");
    cmd->add_flag("--ideal-lengths", cfg.ideal_lengths,
                  "reconstruct with ideal backbone bond lengths");
}

void write_summary(const std::string& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << '\n';
}

// Recomputes the precision model stored by `fit` (mean structure, prior
// variances and lambda are enough; reassembly is exact).
struct StoredModel {
    EnsembleDataset mean_ensemble;
    KappaPrior prior;
    Eigen::VectorXd lambda;
    Eigen::VectorXd lengths;
    double a = 1.0;
};

StoredModel load_model(const std::string& dir) {
    StoredModel stored;
    std::ifstream meta(join_path(dir, "model.json"));
    if (!meta) throw Error("cannot open " + join_path(dir, "model.json"));
    const auto j = nlohmann::json::parse(meta);
    stored.a = j.at("a").get<double>();

    stored.mean_ensemble = ingest(join_path(dir, "mean.pdb"));
    const int atoms = stored.mean_ensemble.atom_count();
    const KappaLayout layout = stored.mean_ensemble.mean.layout;
    stored.lengths = j.at("ideal_lengths").get<bool>() ? ideal_bond_lengths(atoms)
                                                       : stored.mean_ensemble.mean_bond_lengths;

    stored.prior.strength = stored.a;
    stored.prior.data_variance.resize(layout.dof());
    std::ifstream prior_in(join_path(dir, "prior.csv"));
    if (!prior_in) throw Error("cannot open " + join_path(dir, "prior.csv"));
    std::string line;
    int seen = 0;
    while (std::getline(prior_in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("coordinate,", 0) == 0) continue;
        const auto comma = line.find(',');
        const int idx = std::stoi(line.substr(0, comma));
        stored.prior.data_variance[idx] = std::stod(line.substr(comma + 1));
        ++seen;
    }
    if (seen != layout.dof()) throw Error("prior.csv row count does not match layout");

    stored.lambda.resize(atoms);
    std::ifstream lam_in(join_path(dir, "lambda.csv"));
    if (!lam_in) throw Error("cannot open " + join_path(dir, "lambda.csv"));
    seen = 0;
    while (std::getline(lam_in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("atom,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        const int idx = std::stoi(cell);
        std::getline(ss, cell, ',');
        stored.lambda[idx] = std::stod(cell);
        ++seen;
    }
    if (seen != atoms) throw Error("lambda.csv row count does not match atom count");
    return stored;
}

int cmd_ingest(const RunConfig& cfg) {
    EnsembleDataset ds = ingest(cfg.input, cfg.use_sidecar);
    fs::create_directories(cfg.output_dir);
    export_ensemble(ds, join_path(cfg.output_dir, "canonical.pdb"));

    ordered_json j;
    j["config_hash"] = cfg.hash();
    j["models"] = ds.size();
    j["residues"] = ds.atom_count() / 3;
    j["atoms"] = ds.atom_count();
    j["dof"] = ds.dof();
    j["warnings"] = ds.warnings;
    write_summary(join_path(cfg.output_dir, "ingest.json"), j);
    std::cout << "ingested " << ds.size() << " models, " << ds.atom_count() << " atoms, "
              << ds.dof() << " internal coordinates\n";
    return 0;
}

int cmd_fit(const RunConfig& cfg) {
    EnsembleDataset ds = ingest(cfg.input, cfg.use_sidecar);
    const int atoms = ds.atom_count();
    const Eigen::VectorXd lengths =
        cfg.ideal_lengths ? ideal_bond_lengths(atoms) : ds.mean_bond_lengths;
    const BackboneChain mean_chain =
        internal_to_cartesian(InternalCoords::from_kappa(ds.mean, lengths));
    const GramSet grams = compute_gram_set(compute_jacobian(mean_chain, ds.mean.layout));
    const KappaPrior prior = build_prior(ds.deviations, cfg.a);

    ConstraintSet targets;
    if (cfg.target_source == "from-data") {
        std::vector<BackboneChain> chains;
        for (const auto& ic : ds.conformations) chains.push_back(internal_to_cartesian(ic));
        targets.targets = 3.0 * fluctuation_profile(chains, false).per_atom_variance;
    } else if (cfg.target_source == "uniform") {
        targets.targets = Eigen::VectorXd::Constant(atoms, cfg.target_value);
    } else {
        targets.targets = read_target_file(cfg.target_file, atoms);
    }

    LambdaFitOptions opts{cfg.tol, cfg.max_iters, cfg.damping};
    const LambdaFitResult fit = fit_lambda(prior, grams, targets, opts);

    fs::create_directories(cfg.output_dir);
    const std::string hash = cfg.hash();
    {
        std::vector<std::vector<double>> rows;
        for (int m = 0; m < atoms; ++m) {
            rows.push_back({static_cast<double>(m), fit.model.lambda()[m], fit.targets[m],
                            fit.achieved[m], fit.achieved[m] / fit.targets[m] - 1.0});
        }
        write_csv(join_path(cfg.output_dir, "lambda.csv"), hash,
                  "atom,lambda,target_c,achieved_c,residual", rows);
    }
    {
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < prior.dof(); ++i) {
            rows.push_back({static_cast<double>(i), prior.data_variance[i]});
        }
        write_csv(join_path(cfg.output_dir, "prior.csv"), hash, "coordinate,variance", rows);
    }
    export_ensemble(EnsembleDataset::from_conformations({InternalCoords::from_kappa(
                                                             ds.mean, lengths)},
                                                        ds.residue_names),
                    join_path(cfg.output_dir, "mean.pdb"));

    ordered_json j;
    j["config_hash"] = hash;
    j["a"] = cfg.a;
    j["ideal_lengths"] = cfg.ideal_lengths;
    j["atoms"] = atoms;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["max_residual"] = fit.max_residual;
    j["warnings"] = fit.warnings;
    write_summary(join_path(cfg.output_dir, "model.json"), j);

    std::cout << (fit.converged ? "converged" : "NOT converged") << " after "
              << fit.iterations << " iterations, max residual " << fit.max_residual << '\n';
    return fit.converged ? 0 : 1;
}

int cmd_sample(const std::string& model_dir, const RunConfig& cfg) {
    const StoredModel stored = load_model(model_dir);
    const GramSet grams = compute_gram_set(compute_jacobian(
        internal_to_cartesian(InternalCoords::from_kappa(stored.mean_ensemble.mean,
                                                         stored.lengths)),
        stored.mean_ensemble.mean.layout));
    const PrecisionModel model = assemble_precision(stored.prior, stored.lambda, grams);
    const std::vector<InternalCoords> samples =
        sample(model, stored.mean_ensemble.mean, stored.lengths, cfg.n_samples, cfg.seed);
    fs::create_directories(cfg.output_dir);
    export_ensemble(
        EnsembleDataset::from_conformations(samples, stored.mean_ensemble.residue_names),
        join_path(cfg.output_dir, "samples.pdb"));
    std::cout << "wrote " << cfg.n_samples << " samples\n";
    return 0;
}

int cmd_eval(const std::string& reference, const std::string& samples, const RunConfig& cfg) {
    EnsembleDataset ref = ingest(reference, cfg.use_sidecar);
    EnsembleDataset got = ingest(samples, cfg.use_sidecar);
    if (ref.atom_count() != got.atom_count()) {
        throw Error("reference and sample ensembles differ in atom count");
    }
    std::vector<BackboneChain> ref_chains, got_chains;
    for (const auto& ic : ref.conformations) ref_chains.push_back(internal_to_cartesian(ic));
    for (const auto& ic : got.conformations) got_chains.push_back(internal_to_cartesian(ic));

    fs::create_directories(cfg.output_dir);
    const std::string hash = cfg.hash();
    std::map<std::string, double> metrics;

    const FluctuationProfile ref_prof = fluctuation_profile(ref_chains, cfg.superpose);
    const FluctuationProfile got_prof = fluctuation_profile(got_chains, cfg.superpose);
    metrics["profile_mse"] = profile_mse(ref_prof, got_prof);

    std::vector<std::vector<double>> rows;
    for (int m = 0; m < ref.atom_count(); ++m) {
        rows.push_back({static_cast<double>(m), ref_prof.per_atom_variance[m],
                        got_prof.per_atom_variance[m]});
    }
    write_csv(join_path(cfg.output_dir, "profiles.csv"), hash, "atom,reference,samples",
              rows);

    const Histogram2D rama_ref = ramachandran(ref.conformations, cfg.rama_bins);
    const Histogram2D rama_got = ramachandran(got.conformations, cfg.rama_bins);
    write_histogram_csv(join_path(cfg.output_dir, "rama_reference.csv"), hash, rama_ref);
    write_histogram_csv(join_path(cfg.output_dir, "rama_samples.csv"), hash, rama_got);
    metrics["rama_js"] = js_distance(rama_ref, rama_got);

    std::ofstream out(join_path(cfg.output_dir, "metrics.csv"));
    out << "# config " << hash << '\n' << "name,value\n";
    for (const auto& [name, value] : metrics) {
        out << name << ',' << format_double(value) << '\n';
        std::cout << name << " = " << value << '\n';
    }
    return 0;
}

int cmd_baseline(const RunConfig& cfg) {
    EnsembleDataset ds = ingest(cfg.input, cfg.use_sidecar);
    BaselineKind kind = baseline_kind_from_string(cfg.baseline);
    if (kind == BaselineKind::Empirical && ds.size() <= ds.dof()) {
        std::cout << "empirical estimator needs N > D; substituting oas\n";
        kind = BaselineKind::Oas;
    }
    const BaselineModel model = fit_baseline(ds, kind, cfg.a);
    const Eigen::VectorXd lengths =
        cfg.ideal_lengths ? ideal_bond_lengths(ds.atom_count()) : ds.mean_bond_lengths;
    const std::vector<InternalCoords> samples =
        sample_baseline(model, lengths, cfg.n_samples, cfg.seed);
    fs::create_directories(cfg.output_dir);
    export_ensemble(EnsembleDataset::from_conformations(samples, ds.residue_names),
                    join_path(cfg.output_dir, "baseline_samples.pdb"));

    ordered_json j;
    j["config_hash"] = cfg.hash();
    j["kind"] = to_string(kind);
    if (kind == BaselineKind::Oas) j["oas_shrinkage"] = model.oas_shrinkage;
    write_summary(join_path(cfg.output_dir, "baseline.json"), j);
    std::cout << "wrote " << cfg.n_samples << " " << to_string(kind)
              << " baseline samples\n";
    return 0;
}

int cmd_tica(const std::string& project, const RunConfig& cfg) {
    EnsembleDataset ds = ingest(cfg.input, cfg.use_sidecar);
    const Eigen::MatrixXd features = tica_features(ds.conformations);
    const TicaModel model = tica_fit(features, cfg.tica_lag);

    fs::create_directories(cfg.output_dir);
    const std::string hash = cfg.hash();
    {
        std::vector<std::vector<double>> rows;
        for (int f = 0; f < model.components.rows(); ++f) {
            rows.push_back({static_cast<double>(f), model.components(f, 0),
                            model.components(f, 1)});
        }
        write_csv(join_path(cfg.output_dir, "tica_components.csv"), hash,
                  "feature,component_1,component_2", rows);
    }

    auto write_projection = [&](const Eigen::MatrixXd& proj, const std::string& name) {
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < proj.rows(); ++i) {
            rows.push_back({static_cast<double>(i), proj(i, 0), proj(i, 1)});
        }
        write_csv(join_path(cfg.output_dir, name), hash, "frame,tic_1,tic_2", rows);
    };
    write_projection(tica_project(model, features), "tica_reference.csv");
    if (!project.empty()) {
        EnsembleDataset other = ingest(project, cfg.use_sidecar);
        write_projection(tica_project(model, tica_features(other.conformations)),
                         "tica_projected.csv");
    }
    std::cout << "tica eigenvalues: " << model.eigenvalues[0] << ", "
              << model.eigenvalues[1] << '\n';
    return 0;
}

int cmd_run(const RunConfig& cfg) {
    const RunReport report = run_pipeline(cfg);
    std::cout << "config " << report.config_hash << '\n';
    std::cout << "fit: " << (report.fit_converged ? "converged" : "NOT converged") << " in "
              << report.fit_iterations << " iterations, max residual "
              << report.fit_max_residual << '\n';
    for (const auto& [name, value] : report.metrics) {
        std::cout << name << " = " << value << '\n';
    }
    for (const auto& w : report.warnings) std::cout << "warning: " << w << '\n';
    std::cout << "outputs in " << cfg.output_dir << '\n';
    return report.fit_converged ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Constraint-induced Gaussian models of protein backbone ensembles"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value config file");

    icfluc::RunConfig cfg;
    std::string model_dir, reference, samples_path, project;

    auto add_common = [&](CLI::App* cmd, bool needs_input) {
        if (needs_input) {
            cmd->add_option("--input", cfg.input, "multi-model PDB file")->required();
        }
        cmd->add_option("--output-dir", cfg.output_dir, "output directory");
        cmd->add_flag("!--no-sidecar", cfg.use_sidecar,
                      "ignore any exact-coordinate sidecar next to the input");
    };

    CLI::App* ingest_cmd = app.add_subcommand("ingest", "parse a PDB and export canonically");
    add_common(ingest_cmd, true);

    CLI::App* fit_cmd = app.add_subcommand("fit", "fit lambda to fluctuation targets");
    add_common(fit_cmd, true);
    add_fit_flags(fit_cmd, cfg);

    CLI::App* sample_cmd = app.add_subcommand("sample", "sample a fitted model");
    sample_cmd->add_option("--model", model_dir, "directory written by fit")->required();
    add_common(sample_cmd, false);
    sample_cmd->add_option("--n", cfg.n_samples, "sample count");
    sample_cmd->add_option("--seed", cfg.seed, "RNG seed")->required();

    CLI::App* eval_cmd = app.add_subcommand("eval", "compare two ensembles");
    eval_cmd->add_option("--reference", reference, "reference PDB")->required();
    eval_cmd->add_option("--samples", samples_path, "sampled PDB")->required();
    add_common(eval_cmd, false);
    eval_cmd->add_flag("--superpose", cfg.superpose, "align before the profile");
    eval_cmd->add_option("--rama-bins", cfg.rama_bins, "Ramachandran bins per axis");

    CLI::App* baseline_cmd = app.add_subcommand("baseline", "fit and sample a baseline");
    add_common(baseline_cmd, true);
    baseline_cmd->add_option("--kind", cfg.baseline, "empirical, oas or diagonal")
        ->required();
    baseline_cmd->add_option("--a", cfg.a, "diagonal baseline strength");
    baseline_cmd->add_option("--n", cfg.n_samples, "sample count");
    baseline_cmd->add_option("--seed", cfg.seed, "RNG seed")->required();
    baseline_cmd->add_flag("--ideal-lengths", cfg.ideal_lengths,
                           "reconstruct with ideal backbone bond lengths");

    CLI::App* tica_cmd = app.add_subcommand("tica", "fit TICA on a time-ordered ensemble");
    add_common(tica_cmd, true);
    tica_cmd->add_option("--lag", cfg.tica_lag, "lag time in frames");
    tica_cmd->add_option("--project", project, "additional PDB to project");

    CLI::App* run_cmd = app.add_subcommand("run", "full pipeline: ingest to metrics");
    add_common(run_cmd, true);
    add_fit_flags(run_cmd, cfg);
    run_cmd->add_option("--n", cfg.n_samples, "sample count");
    run_cmd->add_option("--seed", cfg.seed, "RNG seed")->required();
    run_cmd->add_flag("--superpose", cfg.superpose, "headline profile mode");
    run_cmd->add_option("--rama-bins", cfg.rama_bins, "Ramachandran bins per axis");
    run_cmd->add_option("--tica-bins", cfg.tica_bins, "TICA histogram bins per axis");
    run_cmd->add_option("--tica-lag", cfg.tica_lag, "TICA lag in frames");
    run_cmd->add_option("--baseline", cfg.baseline,
                        "comparison baseline: none, empirical, oas or diagonal");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest_cmd->parsed()) return cmd_ingest(cfg);
        if (fit_cmd->parsed()) return cmd_fit(cfg);
        if (sample_cmd->parsed()) return cmd_sample(model_dir, cfg);
        if (eval_cmd->parsed()) return cmd_eval(reference, samples_path, cfg);
        if (baseline_cmd->parsed()) return cmd_baseline(cfg);
        if (tica_cmd->parsed()) return cmd_tica(project, cfg);
        if (run_cmd->parsed()) return cmd_run(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
