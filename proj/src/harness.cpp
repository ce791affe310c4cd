#include "shiftex/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include "shiftex/errors.hpp"

namespace shiftex {

std::string to_string(MethodKind kind) {
    switch (kind) {
    case MethodKind::shiftex: return "shiftex";
    case MethodKind::fedavg_global: return "fedavg_global";
    case MethodKind::fedprox_global: return "fedprox_global";
    }
    return "unknown";
}

MethodKind method_from_string(const std::string& name) {
    if (name == "shiftex") return MethodKind::shiftex;
    if (name == "fedavg_global") return MethodKind::fedavg_global;
    if (name == "fedprox_global") return MethodKind::fedprox_global;
    throw UsageError("unknown method '" + name + "' (expected shiftex, fedavg_global or fedprox_global)");
}

void MethodSpec::validate() const {
    train.validate();
    if (kind == MethodKind::fedprox_global)
        require(train.prox_coefficient > 0.0, "fedprox_global needs prox_coefficient > 0");
    if (kind == MethodKind::shiftex) thresholds.validate();
}

std::string RecoveryTime::str() const {
    return rounds ? std::to_string(*rounds) : ">" + std::to_string(horizon);
}

double accuracy_drop(double pre_shift_acc, std::span<const double> series) {
    require(!series.empty(), "accuracy_drop: empty post-shift series");
    return pre_shift_acc - series.front();
}

RecoveryTime recovery_time(double pre_shift_acc, std::span<const double> series, std::size_t horizon) {
    require(!series.empty(), "recovery_time: empty post-shift series");
    const double target = 0.95 * pre_shift_acc;
    for (std::size_t i = 0; i < series.size() && i < horizon; ++i)
        if (series[i] >= target) return {i + 1, horizon};
    return {std::nullopt, horizon};
}

double max_accuracy(std::span<const double> series) {
    require(!series.empty(), "max_accuracy: empty series");
    return *std::max_element(series.begin(), series.end());
}

double aggregate_accuracy(std::span<const std::size_t> correct, std::span<const std::size_t> totals) {
    require(correct.size() == totals.size(), "aggregate_accuracy: size mismatch");
    const auto c = std::accumulate(correct.begin(), correct.end(), std::size_t{0});
    const auto n = std::accumulate(totals.begin(), totals.end(), std::size_t{0});
    require(n > 0, "aggregate_accuracy: no test samples");
    return 100.0 * static_cast<double>(c) / static_cast<double>(n);
}

void ExperimentConfig::validate() const {
    require(parties >= 1, "parties must be >= 1");
    shape().validate();
    window.validate();
    require(windows >= 2, "windows must be >= 2");
    require(test_fraction > 0.0 && test_fraction < 1.0, "test_fraction must lie in (0, 1)");
    require(class_radius > 0.0 && class_std > 0.0, "class_radius and class_std must be > 0");
    require(static_cast<std::size_t>(schedule.horizon) == windows, "schedule horizon must equal windows");
    schedule.validate();
    for (const auto& e : schedule.events) {
        if (!e.covariate) continue;
        for (const auto& s : e.covariate->steps)
            require(s.kind != TransformStep::Kind::shift || s.offset.size() == feature_dim,
                    "shift offset must have feature_dim entries");
    }
    require(!methods.empty(), "at least one method is required");
    std::set<MethodKind> kinds;
    for (const auto& m : methods) {
        require(kinds.insert(m.kind).second, "method " + to_string(m.kind) + " listed twice");
        m.validate();
    }
    require(p_value > 0.0 && p_value < 1.0, "p_value must lie in (0, 1)");
    require(rounds_per_window >= 1 && bootstrap_rounds >= 1, "round counts must be >= 1");
    require(m_profile >= 2 && m_signature >= 2, "m_profile and m_signature must be >= 2");
    require(k_max >= 1, "k_max must be >= 1");
    require(null_reports_per_party >= 1, "null_reports_per_party must be >= 1");
    if (delta_cov) require(*delta_cov >= 0.0, "delta_cov must be >= 0");
    if (delta_label) require(*delta_label >= 0.0, "delta_label must be >= 0");
    if (epsilon_match) require(*epsilon_match >= 0.0, "epsilon_match must be >= 0");
}

ShiftSchedule default_schedule(std::size_t feature_dim) {
    constexpr double pi = std::numbers::pi;
    ShiftSchedule s;
    s.horizon = 5;
    auto covariate = [&](int window, double angle, double offset) {
        ShiftEvent e;
        e.window_index = window;
        e.affected_fraction = 0.5;
        e.covariate = CovariateTransform{{TransformStep::rotation(angle), TransformStep::gaussian_noise(0.5),
                                          TransformStep::shift(std::vector<double>(feature_dim, offset))}};
        return e;
    };
    auto label = [](int window) {
        ShiftEvent e;
        e.window_index = window;
        e.affected_fraction = 0.5;
        e.label_dirichlet_alpha = 0.3;
        return e;
    };
    s.events = {covariate(1, pi / 2, 1.5), label(2), covariate(3, pi, -1.5), label(4)};
    return s;
}

ExperimentConfig default_experiment() {
    ExperimentConfig c;
    c.schedule = default_schedule(c.feature_dim);
    MethodSpec fedprox{MethodKind::fedprox_global, {}, {}};
    fedprox.train.prox_coefficient = 0.01;
    c.methods = {MethodSpec{MethodKind::shiftex, {}, {}}, MethodSpec{MethodKind::fedavg_global, {}, {}}, fedprox};
    for (auto& m : c.methods) {
        m.train.learning_rate = 0.2;
        m.train.local_epochs = 2;
    }
    return c;
}

// ---------------------------------------------------------------------------

ExperimentData generate_data(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto base = symmetric_mixture(cfg.feature_dim, cfg.classes, cfg.class_radius, cfg.class_std);
    const std::size_t W = cfg.windows;
    const std::size_t step = cfg.window.mode == WindowMode::tumbling ? cfg.window.length : cfg.window.stride;
    const std::size_t total = cfg.window.length + (W - 1) * step;
    const auto ranges = make_windows(total, cfg.window);
    require(ranges.size() == W, "window spec does not produce the configured window count");

    ExperimentData data;
    const std::vector<PartyRegime> initial(cfg.parties);
    const auto schedule_seed = derive_seed({cfg.seed, salt(Stream::schedule)});
    for (std::size_t w = 0; w < W; ++w) {
        const auto& prev = w == 0 ? initial : data.regimes.back();
        data.regimes.push_back(apply_schedule(prev, cfg.schedule, static_cast<int>(w), schedule_seed));
    }

    data.train.assign(W, std::vector<Dataset>(cfg.parties));
    data.test.assign(W, std::vector<Dataset>(cfg.parties));
    for (std::size_t p = 0; p < cfg.parties; ++p) {
        const PartyStream stream{static_cast<int>(p), base, derive_seed({cfg.seed, salt(Stream::data), p})};
        // Samples in [start_w, start_{w+1}) come from window w's regime.
        Dataset full;
        full.dim = cfg.feature_dim;
        for (std::size_t w = 0; w < W; ++w) {
            const std::size_t end = w + 1 < W ? ranges[w + 1].start : ranges[w].end;
            auto rng = window_rng(stream, static_cast<int>(w));
            const auto chunk =
                sample_window(stream, static_cast<int>(w), data.regimes[w][p], end - ranges[w].start, rng);
            for (std::size_t i = 0; i < chunk.size(); ++i) full.push_back(chunk.row(i), chunk.labels[i]);
        }
        for (std::size_t w = 0; w < W; ++w) {
            std::vector<std::size_t> idx(ranges[w].end - ranges[w].start);
            std::iota(idx.begin(), idx.end(), ranges[w].start);
            auto rng = make_rng({cfg.seed, salt(Stream::split), p, w});
            auto [train, test] = train_test_split(full.subset(idx), cfg.test_fraction, rng);
            data.train[w][p] = std::move(train);
            data.test[w][p] = std::move(test);
        }
    }
    return data;
}

namespace {

template <class ParamsOf>
double evaluate_parties(std::span<const Dataset> tests, ParamsOf params_of) {
    std::vector<std::size_t> correct, totals;
    for (std::size_t p = 0; p < tests.size(); ++p) {
        correct.push_back(count_correct(params_of(static_cast<int>(p)), tests[p]));
        totals.push_back(tests[p].size());
    }
    return aggregate_accuracy(correct, totals);
}

std::size_t active_experts(const ExpertRegistry& reg) {
    std::set<int> used;
    for (const auto& [p, e] : reg.assignment) used.insert(e);
    return used.size();
}

std::vector<WindowMetrics> window_metrics(const std::vector<RoundRecord>& rounds, std::size_t windows,
                                          std::size_t horizon) {
    std::vector<WindowMetrics> out;
    for (std::size_t w = 1; w < windows; ++w) {
        double pre = 0.0;
        WindowMetrics m;
        m.window_index = static_cast<int>(w);
        for (const auto& r : rounds) {
            if (r.window == static_cast<int>(w) - 1) pre = r.accuracy;
            if (r.window == static_cast<int>(w)) m.per_round_accuracy.push_back(r.accuracy);
        }
        m.accuracy_drop = accuracy_drop(pre, m.per_round_accuracy);
        m.recovery = recovery_time(pre, m.per_round_accuracy, horizon);
        m.max_accuracy = max_accuracy(m.per_round_accuracy);
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<int> random_cohort(std::size_t n, double fraction, std::uint64_t seed) {
    const auto k = std::min<std::size_t>(
        n, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9))));
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    std::vector<int> out;
    auto rng = make_rng({seed});
    std::sample(ids.begin(), ids.end(), std::back_inserter(out), static_cast<std::ptrdiff_t>(k), rng);
    return out;
}

MethodRun run_global(const ExperimentConfig& cfg, const ExperimentData& data, const MethodSpec& method) {
    MethodRun run;
    run.method = method;
    const auto tag = static_cast<std::uint64_t>(method.kind);
    const double fraction = method.thresholds.participant_fraction;
    ModelParams theta = init_model(cfg.shape(), cfg.seed);
    auto one_round = [&](std::size_t w, std::size_t r) {
        const auto cohort = random_cohort(cfg.parties, fraction, derive_seed({cfg.seed, salt(Stream::select), tag, w, r}));
        theta = federated_round(theta, cohort, data.train[w], method.train,
                                derive_seed({cfg.seed, salt(Stream::train), tag, w, r}));
        const double acc = evaluate_parties(data.test[w], [&](int) -> const ModelParams& { return theta; });
        run.rounds.push_back({static_cast<int>(w), r, acc, 1});
    };
    for (std::size_t r = 1; r <= cfg.bootstrap_rounds; ++r) one_round(0, r);
    for (std::size_t w = 1; w < cfg.windows; ++w)
        for (std::size_t r = 1; r <= cfg.rounds_per_window; ++r) one_round(w, r);
    run.windows = window_metrics(run.rounds, cfg.windows, cfg.rounds_per_window);
    return run;
}

BootstrapOptions bootstrap_options(const ExperimentConfig& cfg, const MethodSpec& method) {
    BootstrapOptions bo;
    bo.rounds = cfg.bootstrap_rounds;
    bo.participant_fraction = method.thresholds.participant_fraction;
    bo.m_profile = cfg.m_profile;
    bo.m_signature = cfg.m_signature;
    bo.null_reports_per_party = cfg.null_reports_per_party;
    bo.kernel = cfg.kernel;
    bo.seed = cfg.seed;
    return bo;
}

MethodRun run_shiftex(const ExperimentConfig& cfg, const ExperimentData& data, const MethodSpec& method) {
    MethodRun run;
    run.method = method;
    const auto shape = cfg.shape();

    auto boot = bootstrap(shape, data.train[0], method.train, bootstrap_options(cfg, method), [&](std::size_t r, const AggregatorState& st) {
        const double acc = evaluate_parties(data.test[0], [&](int) -> const ModelParams& { return st.theta0; });
        run.rounds.push_back({0, r, acc, 1});
    });
    AggregatorState state = std::move(boot.state);
    run.null_reports = std::move(boot.null_reports);
    run.calibrated = calibrate_thresholds(run.null_reports, cfg.p_value);

    Thresholds th = method.thresholds;
    th.delta_cov = cfg.delta_cov.value_or(run.calibrated.delta_cov);
    th.delta_label = std::min(cfg.delta_label.value_or(run.calibrated.delta_label), std::log(2.0));
    th.epsilon_match = cfg.epsilon_match.value_or(th.delta_cov);
    run.method.thresholds = th;
    run.snapshots.push_back(registry_snapshot(state.registry, 0));

    AggregatorOptions ao;
    ao.rounds = cfg.rounds_per_window;
    ao.m_signature = cfg.m_signature;
    ao.k_max = cfg.k_max;
    ao.kernel = cfg.kernel;
    ao.seed = cfg.seed;

    auto profile_rng = [&](std::size_t w, std::size_t p) { return make_rng({cfg.seed, salt(Stream::profile), 7, w, p}); };
    std::vector<PreviousWindow> prev(cfg.parties);
    if (cfg.frozen_encoder) {
        for (std::size_t p = 0; p < cfg.parties; ++p) {
            auto rng = profile_rng(0, p);
            prev[p] = {build_profile(state.theta0, data.train[0][p], cfg.m_profile, rng),
                       label_histogram(data.train[0][p].labels, cfg.classes)};
        }
    }

    for (std::size_t w = 1; w < cfg.windows; ++w) {
        std::vector<PartyReport> reports;
        for (std::size_t p = 0; p < cfg.parties; ++p) {
            const ModelParams& encoder =
                cfg.frozen_encoder ? state.theta0 : state.registry.expert_of(static_cast<int>(p)).params;
            if (!cfg.frozen_encoder) {
                auto rng = profile_rng(w - 1, p);
                prev[p] = {build_profile(encoder, data.train[w - 1][p], cfg.m_profile, rng),
                           label_histogram(data.train[w - 1][p].labels, cfg.classes)};
            }
            auto rng = profile_rng(w, p);
            reports.push_back(detect_shift(static_cast<int>(p), static_cast<int>(w), prev[p], data.train[w][p],
                                           encoder, cfg.kernel, cfg.m_profile, rng));
            if (cfg.frozen_encoder) prev[p] = {reports.back().profile, reports.back().label_hist};
        }
        const auto outcome = run_window(
            state, reports, data.train[w], th, method.train, ao, static_cast<int>(w),
            [&](std::size_t r, const AggregatorState& st) {
                const double acc = evaluate_parties(
                    data.test[w], [&](int p) -> const ModelParams& { return st.registry.expert_of(p).params; });
                run.rounds.push_back({static_cast<int>(w), r, acc, active_experts(st.registry)});
            });
        if (!run.rounds.empty() && run.rounds.back().window == static_cast<int>(w))
            run.rounds.back().experts_active = active_experts(state.registry);
        run.events.push_back({static_cast<int>(w), outcome.partition.shifted.size(), outcome.groups.size(),
                              outcome.created.size(), outcome.merges.size(), outcome.finetuned.size(),
                              state.registry.experts.size()});
        run.snapshots.push_back(registry_snapshot(state.registry, static_cast<int>(w)));
    }
    run.windows = window_metrics(run.rounds, cfg.windows, cfg.rounds_per_window);
    return run;
}

std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

} // namespace

RunLog run_experiment(const ExperimentConfig& cfg) {
    const auto data = generate_data(cfg);
    RunLog log;
    log.seed = cfg.seed;
    for (const auto& m : cfg.methods)
        log.methods.push_back(m.kind == MethodKind::shiftex ? run_shiftex(cfg, data, m) : run_global(cfg, data, m));
    return log;
}

Calibration calibrate_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    auto it = std::find_if(cfg.methods.begin(), cfg.methods.end(),
                           [](const MethodSpec& m) { return m.kind == MethodKind::shiftex; });
    const MethodSpec method = it != cfg.methods.end() ? *it : MethodSpec{};
    const auto data = generate_data(cfg);
    auto boot = bootstrap(cfg.shape(), data.train[0], method.train, bootstrap_options(cfg, method));
    Calibration out;
    out.null_reports = std::move(boot.null_reports);
    out.thresholds = calibrate_thresholds(out.null_reports, cfg.p_value);
    return out;
}

std::string metrics_csv(const RunLog& log) {
    std::string out = "method,seed,window,round,accuracy,experts_active\n";
    for (const auto& m : log.methods)
        for (const auto& r : m.rounds)
            out += to_string(m.method.kind) + "," + std::to_string(log.seed) + "," + std::to_string(r.window) + "," +
                   std::to_string(r.round) + "," + fixed4(r.accuracy) + "," + std::to_string(r.experts_active) + "\n";
    return out;
}

std::string summary_csv(const RunLog& log) {
    std::string out = "method,window,drop,time,max\n";
    for (const auto& m : log.methods)
        for (const auto& w : m.windows)
            out += to_string(m.method.kind) + "," + std::to_string(w.window_index) + "," + fixed4(w.accuracy_drop) +
                   "," + w.recovery.str() + "," + fixed4(w.max_accuracy) + "\n";
    return out;
}

std::vector<std::filesystem::path> write_run(const RunLog& log, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> paths;
    auto write = [&](const std::filesystem::path& path, const std::string& text) {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + path.string());
        f << text;
        paths.push_back(path);
    };
    write(out_dir / "metrics.csv", metrics_csv(log));
    write(out_dir / "summary.csv", summary_csv(log));
    for (const auto& m : log.methods) {
        if (m.method.kind != MethodKind::shiftex) continue;
        for (std::size_t t = 0; t < m.snapshots.size(); ++t)
            write(out_dir / ("registry_w" + std::to_string(t) + ".json"), m.snapshots[t].dump(2) + "\n");
    }
    return paths;
}

} // namespace shiftex
