#include "shiftex/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "shiftex/assignment.hpp"
#include "shiftex/config.hpp"
#include "shiftex/errors.hpp"
#include "shiftex/numerics.hpp"

namespace shiftex {

using nlohmann::json;

namespace {

void setup_logging() {
    auto logger = spdlog::get("shiftex");
    if (!logger) logger = spdlog::stderr_logger_mt("shiftex");
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("SHIFTEX_LOG");
    const std::string level = env ? env : "error";
    if (level == "debug")
        spdlog::set_level(spdlog::level::debug);
    else if (level == "info")
        spdlog::set_level(spdlog::level::info);
    else
        spdlog::set_level(spdlog::level::err);
}

RunConfig resolve(const CliOptions& options) {
    RunConfig rc = load_run_config(options.config, options.overrides);
    if (options.seed) rc.experiment.seed = *options.seed;
    if (options.out_dir) rc.out_dir = *options.out_dir;
    return rc;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

// Catches config problems as usage errors and everything after as runtime failures.
template <class Body>
int guarded(const CliOptions& options, std::ostream& err, Body body) {
    RunConfig rc;
    try {
        rc = resolve(options);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }
    try {
        return body(rc);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    }
}

json null_summary(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    return {{"count", v.size()},
            {"mean", v.empty() ? 0.0 : sum / static_cast<double>(v.size())},
            {"median", v.empty() ? 0.0 : nearest_rank_quantile(v, 0.5)},
            {"q95", v.empty() ? 0.0 : nearest_rank_quantile(v, 0.95)},
            {"max", v.empty() ? 0.0 : v.back()}};
}

struct CorpusEntry {
    std::string name;
    json doc;
};

void collect(const json& j, const std::string& name, std::vector<CorpusEntry>& out) {
    const json* list = &j;
    if (j.is_object() && j.contains("instances")) list = &j.at("instances");
    if (list->is_array()) {
        for (std::size_t i = 0; i < list->size(); ++i) out.push_back({name + "#" + std::to_string(i), (*list)[i]});
    } else {
        out.push_back({name, j});
    }
}

std::vector<CorpusEntry> read_corpus(const std::filesystem::path& path) {
    std::vector<CorpusEntry> out;
    if (path.empty()) return out;
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path)) {
        for (const auto& e : std::filesystem::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else if (std::filesystem::exists(path)) {
        files.push_back(path);
    } else {
        throw UsageError("corpus '" + path.string() + "' does not exist");
    }
    for (const auto& f : files) {
        std::ifstream in(f);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw UsageError("corpus file '" + f.string() + "': " + e.what());
        }
        collect(j, f.filename().string(), out);
    }
    return out;
}

} // namespace

int cmd_run(const CliOptions& options, std::ostream& out, std::ostream& err) {
    setup_logging();
    return guarded(options, err, [&](const RunConfig& rc) {
        spdlog::info("running {} methods, seed {}", rc.experiment.methods.size(), rc.experiment.seed);
        const RunLog log = run_experiment(rc.experiment);
        for (const auto& m : log.methods)
            for (const auto& w : m.windows)
                spdlog::debug("{} window {}: drop {:.2f} time {} max {:.2f}", to_string(m.method.kind),
                              w.window_index, w.accuracy_drop, w.recovery.str(), w.max_accuracy);
        for (const auto& p : write_run(log, rc.out_dir)) out << p.string() << "\n";
        return exit_ok;
    });
}

int cmd_calibrate(const CliOptions& options, std::ostream& out, std::ostream& err) {
    setup_logging();
    return guarded(options, err, [&](const RunConfig& rc) {
        const Calibration cal = calibrate_experiment(rc.experiment);
        std::vector<double> cov, label;
        for (const auto& r : cal.null_reports) {
            cov.push_back(r.delta_cov);
            label.push_back(r.delta_label);
        }
        const json doc{{"seed", rc.experiment.seed},
                       {"p_value", rc.experiment.p_value},
                       {"delta_cov", cal.thresholds.delta_cov},
                       {"delta_label", cal.thresholds.delta_label},
                       {"null_delta_cov", null_summary(cov)},
                       {"null_delta_label", null_summary(label)}};
        out << std::setprecision(6) << "delta_cov " << cal.thresholds.delta_cov << "\n"
            << "delta_label " << cal.thresholds.delta_label << "\n";
        for (const char* key : {"null_delta_cov", "null_delta_label"}) {
            const auto& s = doc.at(key);
            out << key << " count " << s.at("count").get<std::size_t>() << " mean " << s.at("mean").get<double>()
                << " median " << s.at("median").get<double>() << " max " << s.at("max").get<double>() << "\n";
        }
        std::filesystem::create_directories(rc.out_dir);
        const auto path = rc.out_dir / "thresholds.json";
        write_json(path, doc);
        out << path.string() << "\n";
        return exit_ok;
    });
}

int cmd_gap(const std::filesystem::path& corpus, std::size_t fuzz, std::ostream& out, std::ostream& err) {
    std::vector<CorpusEntry> entries;
    try {
        entries = read_corpus(corpus);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }
    try {
        std::vector<std::pair<std::string, AssignmentProblem>> problems;
        for (auto& e : entries) {
            try {
                problems.emplace_back(e.name, problem_from_json(e.doc));
            } catch (const std::exception& ex) {
                err << "error: instance " << e.name << ": " << ex.what() << "\n";
                return exit_usage;
            }
        }
        for (std::size_t i = 0; i < fuzz; ++i) problems.emplace_back("fuzz#" + std::to_string(i), random_problem(i));

        std::size_t solved = 0, skipped = 0, violations = 0;
        double sum = 0.0, worst = 0.0;
        out << std::fixed << std::setprecision(6);
        for (const auto& [name, p] : problems) {
            if (p.parties.size() > exact_max_parties || p.facility_count() > exact_max_facilities) {
                out << name << " skipped: " << p.parties.size() << " parties, " << p.facility_count()
                    << " facilities exceed the exact solver envelope\n";
                ++skipped;
                continue;
            }
            const double exact = solve_exact(p).objective;
            const double greedy = solve_greedy(p).objective;
            double gap = 1.0;
            if (std::abs(greedy - exact) > 1e-12) gap = exact > 0.0 ? greedy / exact : INFINITY;
            if (gap < 1.0 - 1e-9) ++violations;
            out << name << " exact " << exact << " greedy " << greedy << " gap " << gap << "\n";
            sum += gap;
            worst = std::max(worst, gap);
            ++solved;
        }
        if (solved == 0) {
            out << "0 instances";
            if (skipped) out << " (" << skipped << " skipped)";
            out << "\n";
            return exit_ok;
        }
        out << solved << " instances, " << skipped << " skipped, mean gap " << sum / static_cast<double>(solved)
            << ", max gap " << worst << "\n";
        if (violations) {
            err << "error: greedy beat exact on " << violations << " instances\n";
            return exit_runtime;
        }
        return exit_ok;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    setup_logging();
    CLI::App app{"Shift-aware federated mixture-of-experts simulator"};
    app.require_subcommand(1);

    CliOptions opts;
    std::uint64_t seed = 0;
    std::string out_dir;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config, "JSON config file")->required();
        sub->add_option("--seed", seed, "Override the experiment seed");
        sub->add_option("--out-dir", out_dir, "Output directory");
        sub->add_option("--override", opts.overrides, "key=value override (repeatable)");
    };
    auto* run = app.add_subcommand("run", "Run the configured experiment");
    add_common(run);
    auto* calibrate = app.add_subcommand("calibrate", "Calibrate detection thresholds");
    add_common(calibrate);
    auto* gap = app.add_subcommand("gap", "Compare greedy and exact assignment solvers");
    std::string corpus;
    std::size_t fuzz = 0;
    gap->add_option("corpus", corpus, "Problem file or directory");
    gap->add_option("--fuzz", fuzz, "Also solve this many generated instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }
    if (run->count("--seed") || calibrate->count("--seed")) opts.seed = seed;
    if (!out_dir.empty()) opts.out_dir = out_dir;

    if (*run) return cmd_run(opts, out, err);
    if (*calibrate) return cmd_calibrate(opts, out, err);
    return cmd_gap(corpus, fuzz, out, err);
}

} // namespace shiftex
