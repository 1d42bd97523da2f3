#include "icfluc/pipeline.hpp"

#include "icfluc/geometry.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace icfluc {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void RunConfig::validate() const {
    if (input.empty()) throw Error("config: input path is required");
    if (output_dir.empty()) throw Error("config: output_dir is required");
    if (!(a > 0.0)) throw Error("config: a must be positive");
    if (target_source != "from-data" && target_source != "file" &&
        target_source != "uniform") {
        throw Error("config: target_source must be from-data, file or uniform");
    }
    if (target_source == "file" && target_file.empty()) {
        throw Error("config: target_file is required with target_source=file");
    }
    if (target_source == "uniform" && !(target_value > 0.0)) {
        throw Error("config: target_value must be positive");
    }
    if (!(tol > 0.0)) throw Error("config: tol must be positive");
    if (max_iters < 1) throw Error("config: max_iters must be >= 1");
    if (!(damping > 0.0) || damping > 1.0) throw Error("config: damping must be in (0, 1]");
    if (n_samples < 2) throw Error("config: n_samples must be >= 2");
    if (rama_bins < 1 || tica_bins < 1) throw Error("config: bin counts must be >= 1");
    if (tica_lag < 1) throw Error("config: tica_lag must be >= 1");
    if (baseline != "none") baseline_kind_from_string(baseline);
}

std::string RunConfig::canonical_string() const {
    // output_dir is deliberately absent: the hash identifies what a run
    // computes, and re-running into another directory must reproduce the
    // same bytes.
    std::ostringstream out;
    out << "a=" << format_double(a) << '\n'
        << "baseline=" << baseline << '\n'
        << "damping=" << format_double(damping) << '\n'
        << "ideal_lengths=" << (ideal_lengths ? 1 : 0) << '\n'
        << "input=" << input << '\n'
        << "max_iters=" << max_iters << '\n'
        << "n_samples=" << n_samples << '\n'
        << "rama_bins=" << rama_bins << '\n'
        << "seed=" << seed << '\n'
        << "superpose=" << (superpose ? 1 : 0) << '\n'
        << "target_file=" << target_file << '\n'
        << "target_source=" << target_source << '\n'
        << "target_value=" << format_double(target_value) << '\n'
        << "tica_bins=" << tica_bins << '\n'
        << "tica_lag=" << tica_lag << '\n'
        << "tol=" << format_double(tol) << '\n'
        << "use_sidecar=" << (use_sidecar ? 1 : 0) << '\n';
    return out.str();
}

std::string RunConfig::hash() const {
    // FNV-1a, 64 bit.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canonical_string()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_csv(const std::string& path, const std::string& config_hash,
               const std::string& header, const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "# config " << config_hash << '\n' << header << '\n';
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            out << (i ? "," : "") << format_double(row[i]);
        }
        out << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

void write_histogram_csv(const std::string& path, const std::string& config_hash,
                         const Histogram2D& histogram) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "# config " << config_hash << '\n';
    auto write_vec = [&](const char* name, const Eigen::VectorXd& v) {
        out << name;
        for (int i = 0; i < v.size(); ++i) out << ',' << format_double(v[i]);
        out << '\n';
    };
    write_vec("xedges", histogram.x_edges);
    write_vec("yedges", histogram.y_edges);
    for (int i = 0; i < histogram.probabilities.rows(); ++i) {
        for (int j = 0; j < histogram.probabilities.cols(); ++j) {
            out << (j ? "," : "") << format_double(histogram.probabilities(i, j));
        }
        out << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

Eigen::VectorXd read_target_file(const std::string& path, int atom_count) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open target file: " + path);
    Eigen::VectorXd targets = Eigen::VectorXd::Constant(atom_count, -1.0);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("atom,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string atom_s, value_s;
        if (!std::getline(ss, atom_s, ',') || !std::getline(ss, value_s, ',')) {
            throw Error("malformed target row: " + line);
        }
        const int atom = std::stoi(atom_s);
        if (atom < 0 || atom >= atom_count) {
            throw Error("target row names atom " + atom_s + " outside 0.." +
                        std::to_string(atom_count - 1));
        }
        targets[atom] = std::stod(value_s);
    }
    for (int m = 0; m < atom_count; ++m) {
        if (targets[m] < 0.0) {
            throw Error("target file lacks a row for atom " + std::to_string(m));
        }
    }
    return targets;
}

namespace {

std::vector<BackboneChain> reconstruct_all(const std::vector<InternalCoords>& confs) {
    std::vector<BackboneChain> chains;
    chains.reserve(confs.size());
    for (const auto& ic : confs) chains.push_back(internal_to_cartesian(ic));
    return chains;
}

template <typename F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(std::string(name) + ": " + e.what());
    }
}

}  // namespace

RunReport run_pipeline(const RunConfig& config) {
    config.validate();
    const std::string hash = config.hash();

    RunReport report;
    report.config_hash = hash;

    fs::create_directories(config.output_dir);
    auto out_path = [&](const std::string& name) {
        report.outputs.push_back(name);
        return (fs::path(config.output_dir) / name).string();
    };

    // --- ingest -----------------------------------------------------------
    EnsembleDataset data = stage("ingest", [&] { return ingest(config.input, config.use_sidecar); });
    for (const auto& w : data.warnings) report.warnings.push_back("ingest: " + w);
    const int atoms = data.atom_count();
    const KappaLayout layout = data.mean.layout;

    const Eigen::VectorXd lengths =
        config.ideal_lengths ? ideal_bond_lengths(atoms) : data.mean_bond_lengths;

    // --- geometry + jacobians at the circular-mean structure ---------------
    const BackboneChain mean_chain = stage("geometry", [&] {
        return internal_to_cartesian(InternalCoords::from_kappa(data.mean, lengths));
    });
    const GramSet grams = stage("jacobian", [&] {
        return compute_gram_set(compute_jacobian(mean_chain, layout));
    });

    // --- prior and targets --------------------------------------------------
    const KappaPrior prior = stage("prior", [&] { return build_prior(data.deviations, config.a); });

    const std::vector<BackboneChain> ref_chains =
        stage("geometry", [&] { return reconstruct_all(data.conformations); });
    const FluctuationProfile ref_nonsup = fluctuation_profile(ref_chains, false);

    ConstraintSet targets;
    if (config.target_source == "from-data") {
        // C is the full squared 3D displacement, the profile a per-axis mean.
        targets.targets = 3.0 * ref_nonsup.per_atom_variance;
    } else if (config.target_source == "uniform") {
        targets.targets = Eigen::VectorXd::Constant(atoms, config.target_value);
    } else {
        targets.targets = stage("targets", [&] { return read_target_file(config.target_file, atoms); });
    }

    // --- inverse problem ----------------------------------------------------
    LambdaFitOptions opts;
    opts.tol = config.tol;
    opts.max_iters = config.max_iters;
    opts.damping = config.damping;
    LambdaFitResult fit =
        stage("fit", [&] { return fit_lambda(prior, grams, targets, opts); });
    report.fit_converged = fit.converged;
    report.fit_iterations = fit.iterations;
    report.fit_max_residual = fit.max_residual;
    for (const auto& w : fit.warnings) report.warnings.push_back("fit: " + w);

    {
        std::vector<std::vector<double>> rows;
        for (int m = 0; m < atoms; ++m) {
            rows.push_back({static_cast<double>(m), fit.model.lambda()[m], fit.targets[m],
                            fit.achieved[m], fit.achieved[m] / fit.targets[m] - 1.0});
        }
        write_csv(out_path("lambda.csv"), hash, "atom,lambda,target_c,achieved_c,residual",
                  rows);
    }

    // --- sampling -----------------------------------------------------------
    const std::vector<InternalCoords> samples = stage("sample", [&] {
        return sample(fit.model, data.mean, lengths, config.n_samples, config.seed);
    });
    stage("export", [&] {
        export_ensemble(EnsembleDataset::from_conformations(samples, data.residue_names),
                        out_path("samples.pdb"));
        report.outputs.push_back("samples.pdb.ic.csv");
        return 0;
    });

    // --- metrics ------------------------------------------------------------
    const std::vector<BackboneChain> model_chains = reconstruct_all(samples);
    const FluctuationProfile model_nonsup = fluctuation_profile(model_chains, false);
    const FluctuationProfile ref_sup = fluctuation_profile(ref_chains, true);
    const FluctuationProfile model_sup = fluctuation_profile(model_chains, true);

    auto profile_rows = [&](const FluctuationProfile& nonsup, const FluctuationProfile& sup) {
        std::vector<std::vector<double>> rows;
        for (int m = 0; m < atoms; ++m) {
            rows.push_back({static_cast<double>(m), nonsup.per_atom_variance[m],
                            sup.per_atom_variance[m]});
        }
        return rows;
    };
    write_csv(out_path("profile_reference.csv"), hash, "atom,nonsuperposed,superposed",
              profile_rows(ref_nonsup, ref_sup));
    write_csv(out_path("profile_model.csv"), hash, "atom,nonsuperposed,superposed",
              profile_rows(model_nonsup, model_sup));

    report.metrics["profile_mse_model"] =
        config.superpose ? profile_mse(model_sup, ref_sup)
                         : profile_mse(model_nonsup, ref_nonsup);

    const Histogram2D rama_ref = ramachandran(data.conformations, config.rama_bins);
    const Histogram2D rama_model = ramachandran(samples, config.rama_bins);
    write_histogram_csv(out_path("rama_reference.csv"), hash, rama_ref);
    write_histogram_csv(out_path("rama_model.csv"), hash, rama_model);
    report.metrics["rama_js_model"] = js_distance(rama_ref, rama_model);

    // --- baseline comparison --------------------------------------------------
    std::vector<InternalCoords> baseline_samples;
    if (config.baseline != "none") {
        BaselineKind kind = baseline_kind_from_string(config.baseline);
        if (kind == BaselineKind::Empirical && data.size() <= data.dof()) {
            kind = BaselineKind::Oas;
            report.baseline_substituted = true;
            report.warnings.push_back(
                "baseline: empirical estimator needs N > D (" + std::to_string(data.size()) +
                " <= " + std::to_string(data.dof()) + "); substituted oas");
        }
        report.baseline_used = to_string(kind);
        const BaselineModel baseline =
            stage("baseline", [&] { return fit_baseline(data, kind, config.a); });
        baseline_samples = stage("baseline", [&] {
            return sample_baseline(baseline, lengths, config.n_samples, config.seed + 1);
        });
        const std::vector<BackboneChain> baseline_chains = reconstruct_all(baseline_samples);
        const FluctuationProfile base_nonsup = fluctuation_profile(baseline_chains, false);
        const FluctuationProfile base_sup = fluctuation_profile(baseline_chains, true);
        write_csv(out_path("profile_baseline.csv"), hash, "atom,nonsuperposed,superposed",
                  profile_rows(base_nonsup, base_sup));
        const Histogram2D rama_base = ramachandran(baseline_samples, config.rama_bins);
        write_histogram_csv(out_path("rama_baseline.csv"), hash, rama_base);
        report.metrics["profile_mse_baseline"] =
            config.superpose ? profile_mse(base_sup, ref_sup)
                             : profile_mse(base_nonsup, ref_nonsup);
        report.metrics["rama_js_baseline"] = js_distance(rama_ref, rama_base);
        if (kind == BaselineKind::Oas) {
            report.metrics["oas_shrinkage"] = baseline.oas_shrinkage;
        }
    }

    // --- TICA ----------------------------------------------------------------
    if (data.size() > config.tica_lag + 2) {
        const Eigen::MatrixXd ref_features = tica_features(data.conformations);
        const TicaModel tica = stage("tica", [&] { return tica_fit(ref_features, config.tica_lag); });
        report.tica_ran = true;
        report.metrics["tica_eigenvalue_1"] = tica.eigenvalues[0];
        report.metrics["tica_eigenvalue_2"] = tica.eigenvalues[1];

        const Eigen::MatrixXd ref_proj = tica_project(tica, ref_features);
        const Eigen::MatrixXd model_proj = tica_project(tica, tica_features(samples));
        Eigen::MatrixXd base_proj;
        if (!baseline_samples.empty()) {
            base_proj = tica_project(tica, tica_features(baseline_samples));
        }

        // One bounding box for every landscape so the binned densities are
        // comparable.
        double x_lo = ref_proj.col(0).minCoeff(), x_hi = ref_proj.col(0).maxCoeff();
        double y_lo = ref_proj.col(1).minCoeff(), y_hi = ref_proj.col(1).maxCoeff();
        for (const Eigen::MatrixXd* proj :
             std::initializer_list<const Eigen::MatrixXd*>{&model_proj, &base_proj}) {
            if (proj->rows() == 0) continue;
            x_lo = std::min(x_lo, proj->col(0).minCoeff());
            x_hi = std::max(x_hi, proj->col(0).maxCoeff());
            y_lo = std::min(y_lo, proj->col(1).minCoeff());
            y_hi = std::max(y_hi, proj->col(1).maxCoeff());
        }
        const double pad_x = 0.05 * (x_hi - x_lo) + 1e-12;
        const double pad_y = 0.05 * (y_hi - y_lo) + 1e-12;
        x_lo -= pad_x;
        x_hi += pad_x;
        y_lo -= pad_y;
        y_hi += pad_y;

        auto proj_histogram = [&](const Eigen::MatrixXd& proj) {
            std::vector<std::pair<double, double>> pts;
            pts.reserve(proj.rows());
            for (int i = 0; i < proj.rows(); ++i) pts.emplace_back(proj(i, 0), proj(i, 1));
            return histogram2d(pts, config.tica_bins, config.tica_bins, x_lo, x_hi, y_lo,
                               y_hi);
        };
        const Histogram2D tica_ref_hist = proj_histogram(ref_proj);
        write_histogram_csv(out_path("tica_reference.csv"), hash, tica_ref_hist);

        const Histogram2D tica_model_hist = proj_histogram(model_proj);
        write_histogram_csv(out_path("tica_model.csv"), hash, tica_model_hist);
        report.metrics["tica_js_model"] = js_distance(tica_ref_hist, tica_model_hist);

        if (base_proj.rows() > 0) {
            const Histogram2D tica_base_hist = proj_histogram(base_proj);
            write_histogram_csv(out_path("tica_baseline.csv"), hash, tica_base_hist);
            report.metrics["tica_js_baseline"] = js_distance(tica_ref_hist, tica_base_hist);
        }
    } else {
        report.warnings.push_back("tica: skipped, needs more than lag+2 = " +
                                  std::to_string(config.tica_lag + 2) + " frames, have " +
                                  std::to_string(data.size()));
    }

    // --- metrics table + report ------------------------------------------------
    {
        std::ofstream out(out_path("metrics.csv"));
        if (!out) throw Error("cannot write metrics.csv");
        out << "# config " << hash << '\n' << "name,value\n";
        for (const auto& [name, value] : report.metrics) {
            out << name << ',' << format_double(value) << '\n';
        }
    }

    {
        nlohmann::ordered_json j;
        j["config_hash"] = hash;
        nlohmann::ordered_json cfg_echo;
        std::istringstream canon(config.canonical_string());
        std::string line;
        while (std::getline(canon, line)) {
            const auto eq = line.find('=');
            cfg_echo[line.substr(0, eq)] = line.substr(eq + 1);
        }
        j["config"] = cfg_echo;
        j["fit"] = {{"converged", report.fit_converged},
                    {"iterations", report.fit_iterations},
                    {"max_residual", report.fit_max_residual}};
        j["baseline_used"] = report.baseline_used;
        j["baseline_substituted"] = report.baseline_substituted;
        j["tica_ran"] = report.tica_ran;
        j["metrics"] = report.metrics;
        j["warnings"] = report.warnings;
        j["outputs"] = report.outputs;
        std::ofstream out((fs::path(config.output_dir) / "report.json").string());
        if (!out) throw Error("cannot write report.json");
        out << j.dump(2) << '\n';
    }

    return report;
}

}  // namespace icfluc
