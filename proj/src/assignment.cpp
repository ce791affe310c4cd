#include "shiftex/assignment.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "shiftex/errors.hpp"
#include "shiftex/random.hpp"
#include "shiftex/stream.hpp"

namespace shiftex {

namespace {

constexpr std::size_t unassigned = std::numeric_limits<std::size_t>::max();

std::vector<std::size_t> order_by_id(std::size_t n, auto id_of) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return id_of(a) < id_of(b); });
    return idx;
}

// Assignment in index form: facility index per party, open flag per candidate.
struct Plan {
    std::vector<std::size_t> choice;
    std::vector<bool> open;
};

class Evaluator {
public:
    Evaluator(const AssignmentProblem& p, std::vector<std::vector<double>> cost)
        : p_(p), cost_(std::move(cost)) {
        party_order_ = order_by_id(p.parties.size(), [&](std::size_t i) { return p.parties[i].id; });
        fac_order_ = order_by_id(p.facility_count(), [&](std::size_t f) { return p.facility_id(f); });
        if (p.mu_balance > 0.0 && !p.parties.empty()) reference_ = p.reference();
    }

    const std::vector<std::vector<double>>& cost() const { return cost_; }
    const std::vector<std::size_t>& party_order() const { return party_order_; }
    const std::vector<std::size_t>& fac_order() const { return fac_order_; }

    double operator()(const Plan& plan) const {
        double total = 0.0;
        for (auto c : party_order_) total += cost_[c][plan.choice[c]];
        const auto opened = static_cast<double>(std::count(plan.open.begin(), plan.open.end(), true));
        total += p_.lambda_open * opened;
        if (p_.mu_balance > 0.0) {
            for (auto f : fac_order_) {
                std::vector<LabelHistogram> hists;
                std::vector<double> weights;
                for (auto c : party_order_) {
                    if (plan.choice[c] != f) continue;
                    hists.push_back(p_.parties[c].label_hist);
                    weights.push_back(p_.parties[c].sample_count);
                }
                if (hists.empty()) continue;
                total += p_.mu_balance * jsd(mix_histograms(hists, weights), reference_);
            }
        }
        return total;
    }

    AssignmentSolution to_solution(const Plan& plan) const {
        AssignmentSolution s;
        for (std::size_t c = 0; c < p_.parties.size(); ++c)
            s.z[{p_.parties[c].id, p_.facility_id(plan.choice[c])}] = 1;
        for (std::size_t k = 0; k < p_.candidates.size(); ++k) s.w[p_.candidates[k].id] = plan.open[k] ? 1 : 0;
        s.objective = (*this)(plan);
        return s;
    }

private:
    const AssignmentProblem& p_;
    std::vector<std::vector<double>> cost_;
    std::vector<std::size_t> party_order_, fac_order_;
    LabelHistogram reference_;
};

void close_unused(const AssignmentProblem& p, Plan& plan) {
    for (std::size_t k = 0; k < p.candidates.size(); ++k) {
        const std::size_t f = p.existing.size() + k;
        if (std::find(plan.choice.begin(), plan.choice.end(), f) == plan.choice.end()) plan.open[k] = false;
    }
}

// Depth-first search over parties in id order, facilities in id order.
class BranchAndBound {
public:
    BranchAndBound(const AssignmentProblem& p, const Evaluator& eval, std::vector<std::size_t> open_facs,
                   std::vector<bool> open, double incumbent)
        : p_(p), eval_(eval), facs_(std::move(open_facs)), best_(incumbent) {
        plan_.choice.assign(p.parties.size(), unassigned);
        plan_.open = std::move(open);
        base_ = p.lambda_open * static_cast<double>(std::count(plan_.open.begin(), plan_.open.end(), true));
        const auto& order = eval.party_order();
        tail_min_.assign(order.size() + 1, 0.0);
        for (std::size_t i = order.size(); i-- > 0;) {
            double m = std::numeric_limits<double>::infinity();
            for (auto f : facs_) m = std::min(m, eval.cost()[order[i]][f]);
            tail_min_[i] = tail_min_[i + 1] + m;
        }
        load_.assign(p.facility_count(), 0);
    }

    std::optional<Plan> run() {
        dfs(0, 0.0);
        return found_;
    }

private:
    void dfs(std::size_t depth, double partial) {
        const auto& order = eval_.party_order();
        if (base_ + partial + tail_min_[depth] > best_ + 1e-12) return;
        if (depth == order.size()) {
            const double obj = eval_(plan_);
            if (obj < best_ - 1e-12 || (!found_ && obj <= best_ + 1e-12)) {
                best_ = obj;
                found_ = plan_;
            }
            return;
        }
        const auto c = order[depth];
        for (auto f : facs_) {
            if (p_.u_max && load_[f] >= *p_.u_max) continue;
            plan_.choice[c] = f;
            ++load_[f];
            dfs(depth + 1, partial + eval_.cost()[c][f]);
            --load_[f];
        }
        plan_.choice[c] = unassigned;
    }

    const AssignmentProblem& p_;
    const Evaluator& eval_;
    std::vector<std::size_t> facs_;
    double best_;
    double base_ = 0.0;
    Plan plan_;
    std::vector<double> tail_min_;
    std::vector<std::size_t> load_;
    std::optional<Plan> found_;
};

EmbeddingSet sample_from_json(const nlohmann::json& j) {
    if (j.is_null()) return {};
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return {};
    return EmbeddingSet::from_rows(rows);
}

nlohmann::json sample_to_json(const EmbeddingSet& s) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < s.rows(); ++i) rows.push_back(std::vector<double>(s.row(i).begin(), s.row(i).end()));
    return rows;
}

} // namespace

void AssignmentProblem::validate() const {
    require(facility_count() > 0, "assignment problem needs at least one existing expert or candidate");
    require(lambda_open >= 0.0 && mu_balance >= 0.0, "lambda_open and mu_balance must be >= 0");
    std::set<int> party_ids, fac_ids;
    for (const auto& p : parties) {
        require(party_ids.insert(p.id).second, "duplicate party id " + std::to_string(p.id));
        require(p.sample_count > 0.0, "party sample_count must be > 0");
    }
    for (const auto* list : {&existing, &candidates})
        for (const auto& f : *list) require(fac_ids.insert(f.id).second, "duplicate expert id " + std::to_string(f.id));
    for (const auto& k : candidates)
        if (k.members)
            for (int m : *k.members) require(party_ids.count(m) == 1, "candidate member is not a party");
    if (u_max) {
        require(*u_max >= 1, "u_max must be >= 1");
        require(*u_max * facility_count() >= parties.size(), "capacity cannot host every party");
    }
    if (costs) {
        require(costs->size() == parties.size(), "cost matrix needs one row per party");
        for (const auto& row : *costs) {
            require(row.size() == facility_count(), "cost matrix needs one column per expert");
            for (double v : row) require(std::isfinite(v) && v >= 0.0, "costs must be finite and >= 0");
        }
    } else {
        for (const auto& p : parties) require(!p.sample.empty(), "party without sample and no cost matrix");
        for (const auto* list : {&existing, &candidates})
            for (const auto& f : *list) require(!f.sample.empty(), "expert without sample and no cost matrix");
    }
    if (mu_balance > 0.0 && !parties.empty()) {
        const auto classes = reference().classes();
        for (const auto& p : parties)
            require(p.label_hist.classes() == classes, "party label histogram size mismatch");
    }
}

int AssignmentProblem::facility_id(std::size_t f) const {
    return f < existing.size() ? existing[f].id : candidates[f - existing.size()].id;
}

LabelHistogram AssignmentProblem::reference() const {
    if (reference_hist) return *reference_hist;
    require(!parties.empty() && parties.front().label_hist.classes() > 0,
            "reference histogram needs party label histograms");
    return LabelHistogram::uniform(parties.front().label_hist.classes());
}

std::vector<std::vector<double>> cost_matrix(const AssignmentProblem& p) {
    if (p.costs) return *p.costs;
    std::vector<std::vector<double>> cost(p.parties.size(), std::vector<double>(p.facility_count()));
    for (std::size_t c = 0; c < p.parties.size(); ++c)
        for (std::size_t f = 0; f < p.facility_count(); ++f) {
            const auto& fac = p.is_candidate(f) ? p.candidates[f - p.existing.size()] : p.existing[f];
            cost[c][f] = mmd_squared(p.parties[c].sample, fac.sample, p.kernel);
        }
    return cost;
}

std::optional<int> AssignmentSolution::choice(int party_id) const {
    std::optional<int> out;
    for (auto it = z.lower_bound({party_id, std::numeric_limits<int>::min()});
         it != z.end() && it->first.first == party_id; ++it) {
        if (it->second != 1) continue;
        if (out) return std::nullopt;
        out = it->first.second;
    }
    return out;
}

std::size_t AssignmentSolution::opened() const {
    return static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](const auto& kv) { return kv.second == 1; }));
}

Feasibility check_feasibility(const AssignmentProblem& p, const AssignmentSolution& s) {
    Feasibility out;
    auto fail = [&](std::string msg) {
        out.ok = false;
        out.violations.push_back(std::move(msg));
    };
    std::set<int> party_ids, existing_ids, candidate_ids;
    for (const auto& c : p.parties) party_ids.insert(c.id);
    for (const auto& e : p.existing) existing_ids.insert(e.id);
    for (const auto& k : p.candidates) candidate_ids.insert(k.id);

    std::map<int, int> ones;
    std::map<int, std::size_t> load;
    for (const auto& [key, v] : s.z) {
        const auto [c, k] = key;
        if (!party_ids.count(c)) fail("unknown id: party " + std::to_string(c));
        if (!existing_ids.count(k) && !candidate_ids.count(k)) fail("unknown id: expert " + std::to_string(k));
        if (v != 0 && v != 1) fail("totality: z(" + std::to_string(c) + "," + std::to_string(k) + ") is not binary");
        if (v != 1) continue;
        ++ones[c];
        ++load[k];
        if (candidate_ids.count(k)) {
            auto it = s.w.find(k);
            if (it == s.w.end() || it->second != 1)
                fail("activation coupling: party " + std::to_string(c) + " uses closed candidate " +
                     std::to_string(k));
        }
    }
    for (int c : party_ids)
        if (ones[c] != 1)
            fail("totality: party " + std::to_string(c) + " has " + std::to_string(ones[c]) + " assignments");
    for (const auto& [k, v] : s.w) {
        if (existing_ids.count(k)) {
            if (v != 1) fail("forced activation: existing expert " + std::to_string(k) + " is closed");
        } else if (!candidate_ids.count(k)) {
            fail("unknown id: candidate " + std::to_string(k));
        } else if (v != 0 && v != 1) {
            fail("activation coupling: w(" + std::to_string(k) + ") is not binary");
        }
    }
    if (p.u_max)
        for (const auto& [k, n] : load)
            if (n > *p.u_max)
                fail("capacity: expert " + std::to_string(k) + " has " + std::to_string(n) + " parties");
    return out;
}

double objective_value(const AssignmentProblem& p, const AssignmentSolution& s) {
    p.validate();
    const auto feas = check_feasibility(p, s);
    if (!feas.ok) throw UsageError("infeasible assignment: " + feas.violations.front());
    std::map<int, std::size_t> fac_index;
    for (std::size_t f = 0; f < p.facility_count(); ++f) fac_index[p.facility_id(f)] = f;
    Plan plan;
    for (const auto& c : p.parties) plan.choice.push_back(fac_index.at(*s.choice(c.id)));
    for (const auto& k : p.candidates) {
        auto it = s.w.find(k.id);
        plan.open.push_back(it != s.w.end() && it->second == 1);
    }
    return Evaluator(p, cost_matrix(p))(plan);
}

AssignmentSolution solve_exact(const AssignmentProblem& p) {
    p.validate();
    if (p.parties.size() > exact_max_parties || p.facility_count() > exact_max_facilities)
        throw UsageError("instance exceeds the exact solver envelope (" + std::to_string(exact_max_parties) +
                         " parties, " + std::to_string(exact_max_facilities) + " experts)");
    const Evaluator eval(p, cost_matrix(p));
    const std::size_t m = p.candidates.size(), n = p.parties.size();

    // Smaller candidate subsets first so ties keep fewer openings.
    std::vector<std::uint32_t> masks(std::size_t{1} << m);
    std::iota(masks.begin(), masks.end(), 0u);
    std::stable_sort(masks.begin(), masks.end(),
                     [](auto a, auto b) { return std::popcount(a) < std::popcount(b); });

    std::optional<Plan> best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (auto mask : masks) {
        std::vector<bool> open(m);
        for (std::size_t k = 0; k < m; ++k) open[k] = (mask >> k) & 1u;
        std::vector<std::size_t> facs;
        for (auto f : eval.fac_order())
            if (!p.is_candidate(f) || open[f - p.existing.size()]) facs.push_back(f);
        if (facs.empty() && n > 0) continue;
        if (p.u_max && *p.u_max * facs.size() < n) continue;

        std::optional<Plan> plan;
        if (p.mu_balance == 0.0 && !p.u_max) {
            Plan direct{std::vector<std::size_t>(n), open};
            for (std::size_t c = 0; c < n; ++c) {
                std::size_t arg = facs.front();
                for (auto f : facs)
                    if (eval.cost()[c][f] < eval.cost()[c][arg]) arg = f;
                direct.choice[c] = arg;
            }
            plan = std::move(direct);
        } else {
            plan = BranchAndBound(p, eval, facs, open, best_obj).run();
        }
        if (!plan) continue;
        const double obj = eval(*plan);
        if (!best || obj < best_obj - 1e-12) {
            best_obj = obj;
            best = std::move(plan);
        }
    }
    require(best.has_value(), "solve_exact: no feasible assignment");
    close_unused(p, *best);
    return eval.to_solution(*best);
}

AssignmentSolution solve_greedy(const AssignmentProblem& p) {
    p.validate();
    const Evaluator eval(p, cost_matrix(p));
    const auto& cost = eval.cost();
    const std::size_t n = p.parties.size(), e0 = p.existing.size();
    Plan plan{std::vector<std::size_t>(n, unassigned), std::vector<bool>(p.candidates.size(), false)};

    auto argmin = [&](std::size_t c, auto allowed) {
        std::size_t arg = unassigned;
        for (auto f : eval.fac_order())
            if (allowed(f) && (arg == unassigned || cost[c][f] < cost[c][arg])) arg = f;
        return arg;
    };
    std::map<int, std::size_t> party_index;
    for (std::size_t c = 0; c < n; ++c) party_index[p.parties[c].id] = c;

    for (auto f : eval.fac_order()) {
        if (!p.is_candidate(f)) continue;
        const auto& cand = p.candidates[f - e0];
        std::vector<std::size_t> cluster;
        for (auto c : eval.party_order()) {
            if (plan.choice[c] != unassigned) continue;
            const bool member = cand.members
                                    ? std::count(cand.members->begin(), cand.members->end(), p.parties[c].id) > 0
                                    : argmin(c, [](std::size_t) { return true; }) == f;
            if (member) cluster.push_back(c);
        }
        if (cluster.empty()) continue;
        double open_cost = p.lambda_open;
        for (auto c : cluster) open_cost += cost[c][f];
        std::size_t target = f;
        double best_existing = std::numeric_limits<double>::infinity();
        for (auto g : eval.fac_order()) {
            if (p.is_candidate(g)) continue;
            double s = 0.0;
            for (auto c : cluster) s += cost[c][g];
            if (s < best_existing) {
                best_existing = s;
                if (s <= open_cost) target = g;
            }
        }
        if (target == f) plan.open[f - e0] = true;
        for (auto c : cluster) plan.choice[c] = target;
    }

    for (auto c : eval.party_order()) {
        if (plan.choice[c] != unassigned) continue;
        std::size_t f = argmin(c, [&](std::size_t g) { return !p.is_candidate(g) || plan.open[g - e0]; });
        if (f == unassigned) {
            f = argmin(c, [](std::size_t) { return true; });
            plan.open[f - e0] = true;
        }
        plan.choice[c] = f;
    }

    if (p.u_max) {
        std::vector<std::size_t> load(p.facility_count(), 0);
        for (auto f : plan.choice) ++load[f];
        for (auto f : eval.fac_order()) {
            while (load[f] > *p.u_max) {
                // Move the party whose cheapest alternative costs the least extra.
                std::size_t who = unassigned, to = unassigned;
                double delta = std::numeric_limits<double>::infinity();
                for (auto c : eval.party_order()) {
                    if (plan.choice[c] != f) continue;
                    for (auto g : eval.fac_order()) {
                        if (g == f || load[g] >= *p.u_max) continue;
                        const bool closed = p.is_candidate(g) && !plan.open[g - e0];
                        const double d = cost[c][g] - cost[c][f] + (closed ? p.lambda_open : 0.0);
                        if (d < delta) {
                            delta = d;
                            who = c;
                            to = g;
                        }
                    }
                }
                require(who != unassigned, "solve_greedy: capacity repair failed");
                if (p.is_candidate(to)) plan.open[to - e0] = true;
                plan.choice[who] = to;
                --load[f];
                ++load[to];
            }
        }
    }
    close_unused(p, plan);
    return eval.to_solution(plan);
}

// ---------------------------------------------------------------------------

nlohmann::json problem_to_json(const AssignmentProblem& p) {
    nlohmann::json j;
    j["parties"] = nlohmann::json::array();
    for (const auto& c : p.parties)
        j["parties"].push_back({{"id", c.id},
                                {"sample", sample_to_json(c.sample)},
                                {"label_hist", c.label_hist.probs()},
                                {"sample_count", c.sample_count}});
    auto facilities = [&](const std::vector<AssignmentFacility>& list) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& f : list) {
            nlohmann::json o{{"id", f.id}, {"sample", sample_to_json(f.sample)}};
            if (f.members) o["members"] = *f.members;
            arr.push_back(std::move(o));
        }
        return arr;
    };
    j["existing"] = facilities(p.existing);
    j["candidates"] = facilities(p.candidates);
    j["lambda_open"] = p.lambda_open;
    j["mu_balance"] = p.mu_balance;
    j["u_max"] = p.u_max ? nlohmann::json(*p.u_max) : nlohmann::json(nullptr);
    if (p.reference_hist) j["reference_hist"] = p.reference_hist->probs();
    if (p.kernel.median_heuristic)
        j["kernel"] = "median";
    else
        j["kernel"] = p.kernel.gamma;
    if (p.costs) j["costs"] = *p.costs;
    return j;
}

AssignmentProblem problem_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"parties",   "existing", "candidates",     "lambda_open", "mu_balance",
                                             "u_max",     "kernel",   "reference_hist", "costs"};
    require(j.is_object(), "assignment problem must be a JSON object");
    for (const auto& [k, v] : j.items()) require(known.count(k) == 1, "unknown assignment problem key: " + k);
    AssignmentProblem p;
    try {
        for (const auto& c : j.value("parties", nlohmann::json::array())) {
            AssignmentParty party;
            party.id = c.at("id").get<int>();
            party.sample = sample_from_json(c.value("sample", nlohmann::json()));
            if (c.contains("label_hist")) party.label_hist = LabelHistogram(c.at("label_hist").get<std::vector<double>>());
            party.sample_count = c.value("sample_count", 1.0);
            p.parties.push_back(std::move(party));
        }
        auto facilities = [&](const char* key) {
            std::vector<AssignmentFacility> out;
            for (const auto& f : j.value(key, nlohmann::json::array())) {
                AssignmentFacility fac;
                fac.id = f.at("id").get<int>();
                fac.sample = sample_from_json(f.value("sample", nlohmann::json()));
                if (f.contains("members")) fac.members = f.at("members").get<std::vector<int>>();
                out.push_back(std::move(fac));
            }
            return out;
        };
        p.existing = facilities("existing");
        p.candidates = facilities("candidates");
        p.lambda_open = j.value("lambda_open", p.lambda_open);
        p.mu_balance = j.value("mu_balance", p.mu_balance);
        if (j.contains("u_max") && !j.at("u_max").is_null()) p.u_max = j.at("u_max").get<std::size_t>();
        if (j.contains("reference_hist"))
            p.reference_hist = LabelHistogram(j.at("reference_hist").get<std::vector<double>>());
        if (j.contains("kernel")) {
            const auto& k = j.at("kernel");
            if (k.is_string()) {
                require(k.get<std::string>() == "median", "kernel must be \"median\" or a gamma value");
                p.kernel = KernelSpec::median();
            } else {
                p.kernel = KernelSpec::fixed(k.get<double>());
            }
        }
        if (j.contains("costs")) p.costs = j.at("costs").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed assignment problem: ") + e.what());
    }
    p.validate();
    return p;
}

nlohmann::json solution_to_json(const AssignmentSolution& s) {
    nlohmann::json assign = nlohmann::json::object();
    for (const auto& [key, v] : s.z)
        if (v == 1) assign[std::to_string(key.first)] = key.second;
    nlohmann::json opened = nlohmann::json::array();
    for (const auto& [k, v] : s.w)
        if (v == 1) opened.push_back(k);
    return {{"assignment", assign}, {"opened", opened}, {"objective", s.objective}};
}

AssignmentProblem random_problem(std::uint64_t seed) {
    auto rng = make_rng({seed, 0x61737367ULL});
    auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.5);
    constexpr std::size_t dim = 2, points = 6, classes = 3;

    auto blob = [&](const std::vector<double>& center) {
        EmbeddingSet s;
        for (std::size_t i = 0; i < points; ++i) {
            std::vector<double> r(dim);
            for (std::size_t k = 0; k < dim; ++k) r[k] = center[k] + noise(rng);
            s.append(r);
        }
        return s;
    };
    auto random_center = [&] {
        std::vector<double> c(dim);
        for (auto& v : c) v = -3.0 + 6.0 * unit(rng);
        return c;
    };

    AssignmentProblem p;
    const int n_existing = uniform_int(1, 3);
    const int n_candidates = uniform_int(0, static_cast<int>(exact_max_facilities) - n_existing);
    const int n_parties = uniform_int(1, 8);
    std::vector<std::vector<double>> centers;
    for (int f = 0; f < n_existing + n_candidates; ++f) {
        centers.push_back(random_center());
        AssignmentFacility fac{f, blob(centers.back()), std::nullopt};
        (f < n_existing ? p.existing : p.candidates).push_back(std::move(fac));
    }
    for (int c = 0; c < n_parties; ++c) {
        const bool stray = unit(rng) < 0.2;
        const auto center = stray ? random_center() : centers[static_cast<std::size_t>(uniform_int(0, n_existing + n_candidates - 1))];
        AssignmentParty party;
        party.id = 100 + c;
        party.sample = blob(center);
        party.label_hist = dirichlet_histogram(classes, 1.0, rng);
        party.sample_count = static_cast<double>(uniform_int(10, 50));
        p.parties.push_back(std::move(party));
    }
    p.lambda_open = unit(rng);
    p.mu_balance = unit(rng) < 0.5 ? 0.0 : 0.3;
    if (unit(rng) < 0.3) {
        const auto f = static_cast<std::size_t>(n_existing + n_candidates);
        const auto floor_cap = (static_cast<std::size_t>(n_parties) + f - 1) / f;
        p.u_max = std::max<std::size_t>(floor_cap, static_cast<std::size_t>(uniform_int(1, n_parties)));
    }
    p.kernel = KernelSpec::fixed(0.5);
    return p;
}

} // namespace shiftex
