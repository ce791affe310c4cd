#include "shiftex/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "shiftex/errors.hpp"

namespace shiftex {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw UsageError("config field '" + path + "': " + what);
}

// Reads the members of one JSON object and rejects any it did not consume.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) bad(path_.empty() ? "<root>" : path_, "expected an object");
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string path(const std::string& key) const { return join(path_, key); }

    void number(const std::string& key, double& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number()) bad(path(key), "expected a number");
            out = v->get<double>();
        }
    }
    void optional_number(const std::string& key, std::optional<double>& out) {
        if (const auto* v = find(key)) {
            if (v->is_null()) {
                out.reset();
                return;
            }
            if (!v->is_number()) bad(path(key), "expected a number or null");
            out = v->get<double>();
        }
    }
    template <class Int>
    void count(const std::string& key, Int& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0))
                bad(path(key), "expected a non-negative integer");
            out = v->get<Int>();
        }
    }
    void optional_count(const std::string& key, std::optional<std::size_t>& out) {
        if (const auto* v = find(key)) {
            if (v->is_null()) {
                out.reset();
                return;
            }
            std::size_t n = 0;
            count(key, n);
            out = n;
        }
    }
    void boolean(const std::string& key, bool& out) {
        if (const auto* v = find(key)) {
            if (!v->is_boolean()) bad(path(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void string(const std::string& key, std::string& out) {
        if (const auto* v = find(key)) {
            if (!v->is_string()) bad(path(key), "expected a string");
            out = v->get<std::string>();
        }
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw UsageError("unknown config key '" + join(path_, k) + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

KernelSpec parse_kernel(const json& v, const std::string& path) {
    if (v.is_string()) {
        if (v.get<std::string>() != "median") bad(path, "expected \"median\" or a positive gamma");
        return KernelSpec::median();
    }
    if (!v.is_number() || v.get<double>() <= 0.0) bad(path, "expected \"median\" or a positive gamma");
    return KernelSpec::fixed(v.get<double>());
}

json kernel_to_json(const KernelSpec& k) { return k.median_heuristic ? json("median") : json(k.gamma); }

TransformStep parse_step(const json& v, const std::string& path, std::size_t dim) {
    if (!v.is_object() || v.size() != 1) bad(path, "expected an object with one of rotation, scale, shift, noise, identity");
    const auto& [kind, arg] = *v.items().begin();
    auto num = [&]() {
        if (!arg.is_number()) bad(join(path, kind), "expected a number");
        return arg.get<double>();
    };
    if (kind == "identity") return TransformStep::identity();
    if (kind == "rotation") return TransformStep::rotation(num());
    if (kind == "scale") return TransformStep::scale(num());
    if (kind == "noise") return TransformStep::gaussian_noise(num());
    if (kind == "shift") {
        if (arg.is_number()) return TransformStep::shift(std::vector<double>(dim, arg.get<double>()));
        if (!arg.is_array()) bad(join(path, kind), "expected a number or an array of numbers");
        std::vector<double> off;
        for (const auto& x : arg) {
            if (!x.is_number()) bad(join(path, kind), "expected an array of numbers");
            off.push_back(x.get<double>());
        }
        return TransformStep::shift(std::move(off));
    }
    bad(path, "unknown transform '" + kind + "'");
}

json step_to_json(const TransformStep& s) {
    switch (s.kind) {
    case TransformStep::Kind::identity: return {{"identity", nullptr}};
    case TransformStep::Kind::rotation: return {{"rotation", s.value}};
    case TransformStep::Kind::scale: return {{"scale", s.value}};
    case TransformStep::Kind::gaussian_noise: return {{"noise", s.value}};
    case TransformStep::Kind::shift: return {{"shift", s.offset}};
    }
    return {};
}

ShiftSchedule parse_schedule(const json& v, const std::string& path, std::size_t dim) {
    Fields f(v, path);
    ShiftSchedule s;
    if (const auto* events = f.find("events")) {
        if (!events->is_array()) bad(f.path("events"), "expected an array");
        for (std::size_t i = 0; i < events->size(); ++i) {
            const std::string ep = f.path("events") + "[" + std::to_string(i) + "]";
            Fields ef((*events)[i], ep);
            ShiftEvent e;
            ef.count("window", e.window_index);
            ef.number("fraction", e.affected_fraction);
            if (const auto* cov = ef.find("covariate"); cov && !cov->is_null()) {
                if (!cov->is_array()) bad(ef.path("covariate"), "expected an array of transform steps");
                CovariateTransform t;
                for (std::size_t k = 0; k < cov->size(); ++k)
                    t.steps.push_back(parse_step((*cov)[k], ef.path("covariate") + "[" + std::to_string(k) + "]", dim));
                e.covariate = std::move(t);
            }
            std::optional<double> alpha;
            ef.optional_number("label_alpha", alpha);
            e.label_dirichlet_alpha = alpha;
            ef.finish();
            s.events.push_back(std::move(e));
        }
    }
    f.finish();
    return s;
}

json schedule_to_json(const ShiftSchedule& s) {
    json events = json::array();
    for (const auto& e : s.events) {
        json o{{"window", e.window_index}, {"fraction", e.affected_fraction}};
        if (e.covariate) {
            json steps = json::array();
            for (const auto& st : e.covariate->steps) steps.push_back(step_to_json(st));
            o["covariate"] = steps;
        }
        if (e.label_dirichlet_alpha) o["label_alpha"] = *e.label_dirichlet_alpha;
        events.push_back(std::move(o));
    }
    return {{"events", events}};
}

void parse_train(Fields& f, TrainConfig& t) {
    f.number("learning_rate", t.learning_rate);
    f.count("local_epochs", t.local_epochs);
    f.count("batch_size", t.batch_size);
}

} // namespace

RunConfig parse_run_config(const json& doc) {
    RunConfig rc;
    auto& c = rc.experiment;
    Fields root(doc, "");
    root.count("seed", c.seed);
    root.count("parties", c.parties);
    root.count("feature_dim", c.feature_dim);
    root.count("classes", c.classes);
    root.count("hidden_dim", c.hidden_dim);
    root.number("class_radius", c.class_radius);
    root.number("class_std", c.class_std);
    root.count("windows", c.windows);
    root.number("test_fraction", c.test_fraction);
    std::string out_dir = rc.out_dir.string();
    root.string("out_dir", out_dir);
    rc.out_dir = out_dir;

    if (const auto* w = root.find("window")) {
        Fields wf(*w, "window");
        std::string mode = c.window.mode == WindowMode::tumbling ? "tumbling" : "sliding";
        wf.string("mode", mode);
        wf.count("length", c.window.length);
        std::size_t stride = c.window.mode == WindowMode::sliding ? c.window.stride : c.window.length;
        wf.count("stride", stride);
        wf.finish();
        if (mode == "tumbling")
            c.window = WindowSpec::tumbling(c.window.length);
        else if (mode == "sliding")
            c.window = WindowSpec::sliding(c.window.length, stride);
        else
            bad("window.mode", "expected \"tumbling\" or \"sliding\"");
    }

    if (const auto* s = root.find("schedule"))
        c.schedule = parse_schedule(*s, "schedule", c.feature_dim);
    else
        c.schedule = default_schedule(c.feature_dim);
    c.schedule.horizon = static_cast<int>(c.windows);

    TrainConfig train = c.methods.front().train;
    if (const auto* t = root.find("train")) {
        Fields tf(*t, "train");
        parse_train(tf, train);
        tf.finish();
    }
    double fedprox_mu = 0.01;
    root.number("fedprox_mu", fedprox_mu);

    Thresholds th;
    if (const auto* t = root.find("thresholds")) {
        Fields tf(*t, "thresholds");
        tf.optional_number("delta_cov", c.delta_cov);
        tf.optional_number("delta_label", c.delta_label);
        tf.optional_number("epsilon_match", c.epsilon_match);
        tf.number("p_value", c.p_value);
        tf.number("tau_merge", th.tau_merge);
        tf.count("gamma_min_cluster", th.gamma_min_cluster);
        tf.optional_count("u_max", th.u_max);
        tf.number("lambda_open", th.lambda_open);
        tf.number("mu_balance", th.mu_balance);
        tf.number("ema_beta", th.ema_beta);
        tf.number("participant_fraction", th.participant_fraction);
        tf.finish();
    }

    if (const auto* a = root.find("aggregator")) {
        Fields af(*a, "aggregator");
        af.count("rounds_per_window", c.rounds_per_window);
        af.count("bootstrap_rounds", c.bootstrap_rounds);
        af.count("m_profile", c.m_profile);
        af.count("m_signature", c.m_signature);
        af.count("k_max", c.k_max);
        af.count("null_reports_per_party", c.null_reports_per_party);
        af.boolean("frozen_encoder", c.frozen_encoder);
        if (const auto* k = af.find("kernel")) c.kernel = parse_kernel(*k, "aggregator.kernel");
        af.finish();
    }

    std::vector<std::string> names;
    for (const auto& m : c.methods) names.push_back(to_string(m.kind));
    if (const auto* m = root.find("methods")) {
        if (!m->is_array()) bad("methods", "expected an array of method names");
        names.clear();
        for (const auto& v : *m) {
            if (!v.is_string()) bad("methods", "expected an array of method names");
            names.push_back(v.get<std::string>());
        }
    }
    c.methods.clear();
    for (const auto& n : names) {
        MethodSpec spec;
        try {
            spec.kind = method_from_string(n);
        } catch (const UsageError& e) {
            bad("methods", e.what());
        }
        spec.train = train;
        spec.thresholds = th;
        if (spec.kind == MethodKind::fedprox_global) spec.train.prox_coefficient = fedprox_mu;
        c.methods.push_back(spec);
    }
    root.finish();

    try {
        c.validate();
    } catch (const UsageError& e) {
        throw UsageError(std::string("invalid config: ") + e.what());
    }
    return rc;
}

json run_config_to_json(const RunConfig& rc) {
    const auto& c = rc.experiment;
    json j;
    j["seed"] = c.seed;
    j["parties"] = c.parties;
    j["feature_dim"] = c.feature_dim;
    j["classes"] = c.classes;
    j["hidden_dim"] = c.hidden_dim;
    j["class_radius"] = c.class_radius;
    j["class_std"] = c.class_std;
    j["window"] = {{"mode", c.window.mode == WindowMode::tumbling ? "tumbling" : "sliding"},
                   {"length", c.window.length},
                   {"stride", c.window.mode == WindowMode::tumbling ? c.window.length : c.window.stride}};
    j["windows"] = c.windows;
    j["test_fraction"] = c.test_fraction;
    j["schedule"] = schedule_to_json(c.schedule);

    json methods = json::array();
    double fedprox_mu = 0.01;
    const MethodSpec& first = c.methods.front();
    for (const auto& m : c.methods) {
        methods.push_back(to_string(m.kind));
        if (m.kind == MethodKind::fedprox_global) fedprox_mu = m.train.prox_coefficient;
    }
    j["methods"] = methods;
    j["train"] = {{"learning_rate", first.train.learning_rate},
                  {"local_epochs", first.train.local_epochs},
                  {"batch_size", first.train.batch_size}};
    j["fedprox_mu"] = fedprox_mu;
    const auto& th = first.thresholds;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    j["thresholds"] = {{"delta_cov", opt(c.delta_cov)},
                       {"delta_label", opt(c.delta_label)},
                       {"epsilon_match", opt(c.epsilon_match)},
                       {"p_value", c.p_value},
                       {"tau_merge", th.tau_merge},
                       {"gamma_min_cluster", th.gamma_min_cluster},
                       {"u_max", th.u_max ? json(*th.u_max) : json(nullptr)},
                       {"lambda_open", th.lambda_open},
                       {"mu_balance", th.mu_balance},
                       {"ema_beta", th.ema_beta},
                       {"participant_fraction", th.participant_fraction}};
    j["aggregator"] = {{"rounds_per_window", c.rounds_per_window},
                       {"bootstrap_rounds", c.bootstrap_rounds},
                       {"m_profile", c.m_profile},
                       {"m_signature", c.m_signature},
                       {"k_max", c.k_max},
                       {"null_reports_per_party", c.null_reports_per_party},
                       {"kernel", kernel_to_json(c.kernel)},
                       {"frozen_encoder", c.frozen_encoder}};
    j["out_dir"] = rc.out_dir.string();
    return j;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);

    json* node = &doc;
    std::stringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) {
        if (part.empty()) throw UsageError("override key '" + key + "' has an empty component");
        path.push_back(part);
    }
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (!node->is_object()) throw UsageError("override key '" + key + "' does not name an object field");
        node = &(*node)[path[i]];
        if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw UsageError("override key '" + key + "' does not name an object field");

    auto parse_value = [](const std::string& text) {
        json v = json::parse(text, nullptr, false);
        return v.is_discarded() ? json(text) : v;
    };
    json value = parse_value(raw);
    auto& target = (*node)[path.back()];
    if (target.is_array() && !value.is_array()) {
        json arr = json::array();
        std::stringstream items(raw);
        std::string item;
        while (std::getline(items, item, ',')) arr.push_back(parse_value(item));
        value = std::move(arr);
    }
    target = std::move(value);
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError("config file '" + path.string() + "': " + e.what());
    }
    if (!doc.is_object()) throw UsageError("config file '" + path.string() + "' must hold a JSON object");
    for (const auto& o : overrides) {
        // "methods" is array-valued even when the file leaves it at its default.
        if (o.rfind("methods=", 0) == 0 && !doc.contains("methods")) doc["methods"] = json::array();
        apply_override(doc, o);
    }
    return parse_run_config(doc);
}

} // namespace shiftex
