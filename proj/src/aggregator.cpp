#include "shiftex/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "shiftex/clustering.hpp"
#include "shiftex/errors.hpp"

namespace shiftex {

void Thresholds::validate() const {
    require(delta_cov >= 0.0, "thresholds.delta_cov must be >= 0");
    require(delta_label >= 0.0 && delta_label <= std::log(2.0) + 1e-12, "thresholds.delta_label must lie in [0, ln 2]");
    require(epsilon_match >= 0.0, "thresholds.epsilon_match must be >= 0");
    require(tau_merge > -1.0 && tau_merge <= 1.0, "thresholds.tau_merge must lie in (-1, 1]");
    require(!u_max || *u_max >= 1, "thresholds.u_max must be >= 1");
    require(lambda_open >= 0.0 && mu_balance >= 0.0, "thresholds.lambda_open and mu_balance must be >= 0");
    require(ema_beta >= 0.0 && ema_beta < 1.0, "thresholds.ema_beta must lie in [0, 1)");
    require(participant_fraction > 0.0 && participant_fraction <= 1.0,
            "thresholds.participant_fraction must lie in (0, 1]");
}

std::size_t ExpertRegistry::load(int expert_id) const {
    return static_cast<std::size_t>(std::count_if(assignment.begin(), assignment.end(),
                                                  [&](const auto& kv) { return kv.second == expert_id; }));
}

std::vector<int> ExpertRegistry::parties_of(int expert_id) const {
    std::vector<int> out;
    for (const auto& [p, e] : assignment)
        if (e == expert_id) out.push_back(p);
    return out;
}

const ExpertRecord& ExpertRegistry::expert_of(int party_id) const {
    auto it = assignment.find(party_id);
    require(it != assignment.end(), "party " + std::to_string(party_id) + " has no expert");
    return experts.at(it->second);
}

void ExpertRegistry::check_invariants(std::optional<std::size_t> u_max) const {
    for (const auto& [id, e] : experts) {
        require(e.expert_id == id, "expert record id mismatch");
        require(id < next_id, "expert id not below next_id");
    }
    for (const auto& [p, e] : assignment)
        require(experts.count(e) == 1, "party " + std::to_string(p) + " assigned to missing expert");
    if (u_max)
        for (const auto& [id, e] : experts)
            require(load(id) <= *u_max, "expert " + std::to_string(id) + " exceeds capacity");
}

namespace {

EmbeddingSet subsample_rows(const EmbeddingSet& s, std::size_t cap, Rng& rng) {
    if (s.rows() <= cap) return s;
    std::vector<std::size_t> idx(s.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::size_t> keep;
    std::sample(idx.begin(), idx.end(), std::back_inserter(keep), static_cast<std::ptrdiff_t>(cap), rng);
    return s.select(keep);
}

std::vector<double> weighted_mean(std::span<const std::vector<double>> vecs, std::span<const double> w) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<double> out(vecs.front().size(), 0.0);
    for (std::size_t i = 0; i < vecs.size(); ++i)
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += w[i] / total * vecs[i][k];
    return out;
}

// Algorithm R over the rows of `a` followed by the rows of `b`.
EmbeddingSet reservoir_merge(const EmbeddingSet& a, const EmbeddingSet& b, std::size_t cap, Rng& rng) {
    if (a.empty()) return subsample_rows(b, cap, rng);
    if (b.empty()) return subsample_rows(a, cap, rng);
    require(a.dim() == b.dim(), "reservoir_merge: dimension mismatch");
    EmbeddingSet out(a.dim(), {});
    std::size_t seen = 0;
    auto offer = [&](std::span<const double> r) {
        ++seen;
        if (out.rows() < cap) {
            out.append(r);
            return;
        }
        const auto j = std::uniform_int_distribution<std::size_t>(0, seen - 1)(rng);
        if (j < cap) std::copy(r.begin(), r.end(), out.row(j).begin());
    };
    for (std::size_t i = 0; i < a.rows(); ++i) offer(a.row(i));
    for (std::size_t i = 0; i < b.rows(); ++i) offer(b.row(i));
    return out;
}

const PartyReport& report_for(std::span<const PartyReport> reports, int party) {
    require(party >= 0 && static_cast<std::size_t>(party) < reports.size() &&
                reports[static_cast<std::size_t>(party)].party_id == party,
            "reports must be indexed by party id");
    return reports[static_cast<std::size_t>(party)];
}

const Dataset& dataset_for(std::span<const Dataset> datasets, int party) {
    require(party >= 0 && static_cast<std::size_t>(party) < datasets.size(),
            "no dataset for party " + std::to_string(party));
    return datasets[static_cast<std::size_t>(party)];
}

} // namespace

GroupSummary summarize_group(std::span<const PartyReport* const> members, std::size_t cap, Rng& rng) {
    require(!members.empty(), "summarize_group: empty group");
    GroupSummary g;
    std::vector<std::vector<double>> means;
    std::vector<double> weights;
    std::vector<LabelHistogram> hists;
    EmbeddingSet pooled;
    for (const auto* r : members) {
        g.parties.push_back(r->party_id);
        means.push_back(r->profile.mean);
        weights.push_back(static_cast<double>(std::max<std::size_t>(r->profile.n_source, 1)));
        hists.push_back(r->label_hist);
        for (std::size_t i = 0; i < r->profile.sample.rows(); ++i) pooled.append(r->profile.sample.row(i));
    }
    std::sort(g.parties.begin(), g.parties.end());
    g.mean = weighted_mean(means, weights);
    g.sample = subsample_rows(pooled, cap, rng);
    g.label_hist = mix_histograms(hists, weights);
    return g;
}

// ---------------------------------------------------------------------------

CalibratedThresholds calibrate_thresholds(std::span<const PartyReport> null_reports, double p_value) {
    require(null_reports.size() >= 20, "calibrate_thresholds: need at least 20 null reports, got " +
                                           std::to_string(null_reports.size()));
    require(p_value > 0.0 && p_value < 1.0, "calibrate_thresholds: p_value must lie in (0, 1)");
    std::vector<double> cov, lab;
    for (const auto& r : null_reports) {
        cov.push_back(r.delta_cov);
        lab.push_back(r.delta_label);
    }
    return {nearest_rank_quantile(cov, 1.0 - p_value), nearest_rank_quantile(lab, 1.0 - p_value)};
}

Partition partition_shifted(std::span<const PartyReport> reports, const Thresholds& thresholds) {
    Partition p;
    for (const auto& r : reports) {
        if (r.delta_cov > thresholds.delta_cov || r.delta_label > thresholds.delta_label)
            p.shifted.push_back(r.party_id);
        else
            p.stable.push_back(r.party_id);
    }
    std::sort(p.shifted.begin(), p.shifted.end());
    std::sort(p.stable.begin(), p.stable.end());
    return p;
}

std::vector<std::vector<int>> cluster_shifted(std::span<const PartyReport> shifted, std::size_t k_max,
                                              std::uint64_t seed) {
    require(!shifted.empty(), "cluster_shifted: no shifted parties");
    std::vector<const PartyReport*> sorted;
    for (const auto& r : shifted) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->party_id < b->party_id; });
    EmbeddingSet means;
    for (const auto* r : sorted) means.append(r->profile.mean);
    const auto choice = choose_clusters(means, k_max, seed);
    std::vector<std::vector<int>> groups;
    for (const auto& members : cluster_members(choice.clustering)) {
        std::vector<int> g;
        for (auto i : members) g.push_back(sorted[i]->party_id);
        groups.push_back(std::move(g));
    }
    return groups;
}

std::optional<int> match_expert(const EmbeddingSet& group_sample, const ExpertRegistry& registry, double epsilon,
                                const KernelSpec& kernel) {
    require(!registry.experts.empty(), "match_expert: empty registry");
    std::optional<int> best;
    double best_mmd = 0.0;
    for (const auto& [id, e] : registry.experts) {
        if (e.signature_sample.empty()) continue;
        const double m = mmd_squared(group_sample, e.signature_sample, kernel);
        if (!best || m < best_mmd) {
            best = id;
            best_mmd = m;
        }
    }
    if (best && best_mmd <= epsilon) return best;
    return std::nullopt;
}

ExpertRecord update_latent_memory(const ExpertRecord& expert, std::span<const double> group_mean,
                                  const EmbeddingSet& group_sample, double ema_beta, std::size_t m_signature,
                                  Rng& rng) {
    require(group_mean.size() == expert.memory_signature.size(), "update_latent_memory: dimension mismatch");
    require(group_sample.empty() || group_sample.dim() == expert.memory_signature.size(),
            "update_latent_memory: sample dimension mismatch");
    ExpertRecord out = expert;
    for (std::size_t k = 0; k < group_mean.size(); ++k)
        out.memory_signature[k] = ema_beta * expert.memory_signature[k] + (1.0 - ema_beta) * group_mean[k];
    if (!group_sample.empty() && ema_beta < 1.0)
        out.signature_sample = reservoir_merge(expert.signature_sample, group_sample, m_signature, rng);
    return out;
}

std::vector<int> flips_select(std::span<const std::pair<int, LabelHistogram>> group, double fraction,
                              std::uint64_t seed) {
    require(fraction > 0.0 && fraction <= 1.0, "flips_select: fraction must lie in (0, 1]");
    std::vector<int> out;
    if (group.empty()) return out;
    const std::size_t n = group.size();
    const auto budget = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
    if (budget >= n) {
        for (const auto& [id, h] : group) out.push_back(id);
        std::sort(out.begin(), out.end());
        return out;
    }

    EmbeddingSet hists;
    for (const auto& [id, h] : group) hists.append(h.probs());
    const auto choice = choose_clusters(hists, 5, seed);
    auto clusters = cluster_members(choice.clustering);
    auto rng = make_rng({seed, salt(Stream::select)});
    for (auto& c : clusters) std::shuffle(c.begin(), c.end(), rng);
    std::shuffle(clusters.begin(), clusters.end(), rng);

    std::vector<std::size_t> cursor(clusters.size(), 0);
    while (out.size() < budget) {
        for (std::size_t c = 0; c < clusters.size() && out.size() < budget; ++c) {
            if (cursor[c] < clusters[c].size()) out.push_back(group[clusters[c][cursor[c]++]].first);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------

ModelParams federated_round(const ModelParams& global, std::span<const int> cohort,
                            std::span<const Dataset> datasets, const TrainConfig& cfg, std::uint64_t seed) {
    require(!cohort.empty(), "federated_round: empty cohort");
    std::vector<int> members(cohort.begin(), cohort.end());
    std::sort(members.begin(), members.end());
    std::vector<std::pair<ModelParams, double>> updates;
    for (int p : members) {
        const Dataset& d = dataset_for(datasets, p);
        auto rng = make_rng({seed, salt(Stream::train), static_cast<std::uint64_t>(p)});
        updates.emplace_back(local_train(global, d, cfg, &global, rng), static_cast<double>(d.size()));
    }
    return fed_aggregate(updates);
}

ExpertRecord train_expert(const ExpertRecord& expert, std::span<const int> cohort, std::span<const Dataset> datasets,
                          const TrainConfig& cfg, std::size_t rounds, std::uint64_t seed) {
    require(!cohort.empty(), "train_expert: empty cohort");
    ExpertRecord out = expert;
    for (std::size_t r = 0; r < rounds; ++r)
        out.params = federated_round(out.params, cohort, datasets, cfg, derive_seed({seed, r}));
    return out;
}

std::pair<ExpertRegistry, int> create_expert(const ExpertRegistry& registry, const ModelParams& base,
                                             const GroupSummary& group, int window,
                                             std::optional<std::size_t> u_max) {
    require(!group.parties.empty(), "create_expert: empty group");
    ExpertRegistry out = registry;
    const int id = out.next_id++;
    ExpertRecord e;
    e.expert_id = id;
    e.params = base;
    e.memory_signature = group.mean;
    e.signature_sample = group.sample;
    e.agg_label_hist = group.label_hist;
    e.created_window = window;
    out.experts.emplace(id, std::move(e));
    std::size_t assigned = 0;
    for (int p : group.parties) {
        if (u_max && assigned >= *u_max) break;
        out.assignment[p] = id;
        ++assigned;
    }
    return {std::move(out), id};
}

std::map<int, ModelParams> signal_local_finetune(std::span<const int> group, const ExpertRegistry& registry,
                                                 std::span<const Dataset> datasets, const TrainConfig& cfg,
                                                 std::uint64_t seed) {
    std::map<int, ModelParams> out;
    for (int p : group) {
        const auto& base = registry.expert_of(p).params;
        auto rng = make_rng({seed, salt(Stream::train), static_cast<std::uint64_t>(p)});
        out.emplace(p, local_train(base, dataset_for(datasets, p), cfg, &base, rng));
    }
    return out;
}

ExpertRegistry consolidate_experts(const ExpertRegistry& registry, double tau_merge, std::optional<std::size_t> u_max,
                                   std::vector<MergeEvent>* log, std::uint64_t seed) {
    ExpertRegistry reg = registry;
    for (;;) {
        std::optional<std::pair<int, int>> best;
        double best_cos = tau_merge;
        for (auto a = reg.experts.begin(); a != reg.experts.end(); ++a) {
            for (auto b = std::next(a); b != reg.experts.end(); ++b) {
                if (u_max && reg.load(a->first) + reg.load(b->first) > *u_max) continue;
                const double c = cosine_similarity(a->second.params.weights, b->second.params.weights);
                if (c > best_cos) {
                    best_cos = c;
                    best = {a->first, b->first};
                }
            }
        }
        if (!best) break;
        auto [keep_id, drop_id] = *best;
        ExpertRecord& keep = reg.experts.at(keep_id);
        const ExpertRecord& drop = reg.experts.at(drop_id);
        double wk = static_cast<double>(reg.load(keep_id));
        double wd = static_cast<double>(reg.load(drop_id));
        if (wk == 0.0 && wd == 0.0) wk = wd = 1.0;
        const double tk = wk / (wk + wd), td = wd / (wk + wd);
        for (std::size_t i = 0; i < keep.params.weights.size(); ++i)
            keep.params.weights[i] = tk * keep.params.weights[i] + td * drop.params.weights[i];
        for (std::size_t i = 0; i < keep.memory_signature.size(); ++i)
            keep.memory_signature[i] = tk * keep.memory_signature[i] + td * drop.memory_signature[i];
        const std::vector<LabelHistogram> hists{keep.agg_label_hist, drop.agg_label_hist};
        const std::vector<double> w{tk, td};
        keep.agg_label_hist = mix_histograms(hists, w);
        auto rng = make_rng({seed, salt(Stream::reservoir), static_cast<std::uint64_t>(keep_id),
                             static_cast<std::uint64_t>(drop_id)});
        keep.signature_sample = reservoir_merge(keep.signature_sample, drop.signature_sample,
                                                std::max(keep.signature_sample.rows(), drop.signature_sample.rows()),
                                                rng);
        keep.created_window = std::min(keep.created_window, drop.created_window);
        for (auto& [p, e] : reg.assignment)
            if (e == drop_id) e = keep_id;
        reg.experts.erase(drop_id);
        if (log) log->push_back({keep_id, drop_id, best_cos});
    }
    return reg;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<int, LabelHistogram>> hists_of(std::span<const int> parties,
                                                     std::span<const PartyReport> reports) {
    std::vector<std::pair<int, LabelHistogram>> out;
    for (int p : parties) out.emplace_back(p, report_for(reports, p).label_hist);
    return out;
}

int resolve(const std::vector<MergeEvent>& merges, int id) {
    for (const auto& m : merges)
        if (m.removed == id) id = m.kept;
    return id;
}

} // namespace

WindowOutcome run_window(AggregatorState& state, std::span<const PartyReport> reports,
                         std::span<const Dataset> datasets, const Thresholds& th, const TrainConfig& cfg,
                         const AggregatorOptions& opt, int window, const RoundCallback& on_round) {
    th.validate();
    require(!state.registry.experts.empty(), "run_window: bootstrap has not run");
    const auto w = static_cast<std::uint64_t>(window);
    auto& reg = state.registry;
    WindowOutcome out;
    out.partition = partition_shifted(reports, th);

    // Parties trained per expert this window, one entry per group.
    std::map<int, std::vector<std::vector<int>>> jobs;
    // Memory updates applied after consolidation.
    std::vector<std::pair<int, GroupSummary>> memory_updates;

    if (!out.partition.shifted.empty()) {
        std::vector<PartyReport> shifted;
        for (int p : out.partition.shifted) shifted.push_back(report_for(reports, p));
        out.groups = cluster_shifted(shifted, opt.k_max, derive_seed({opt.seed, salt(Stream::cluster), w}));

        std::uint64_t gi = 0;
        for (const auto& group : out.groups) {
            const std::uint64_t g = gi++;
            if (group.size() < th.gamma_min_cluster) {
                out.finetuned.insert(out.finetuned.end(), group.begin(), group.end());
                continue;
            }
            std::vector<const PartyReport*> members;
            for (int p : group) members.push_back(&report_for(reports, p));
            auto rng = make_rng({opt.seed, salt(Stream::profile), w, g});
            GroupSummary summary = summarize_group(members, opt.m_signature, rng);

            auto matched = match_expert(summary.sample, reg, th.epsilon_match, opt.kernel);
            if (matched && th.u_max) {
                std::size_t incoming = 0;
                for (int p : group) incoming += reg.assignment.at(p) != *matched;
                if (reg.load(*matched) + incoming > *th.u_max) matched.reset();
            }
            if (matched) {
                for (int p : group) reg.assignment[p] = *matched;
                jobs[*matched].push_back(group);
                out.matched[*matched].insert(out.matched[*matched].end(), group.begin(), group.end());
                memory_updates.emplace_back(*matched, std::move(summary));
            } else {
                auto [next, id] = create_expert(reg, state.theta0, summary, window, th.u_max);
                reg = std::move(next);
                std::vector<int> placed = reg.parties_of(id);
                jobs[id].push_back(placed);
                out.created.push_back(id);
            }
        }
    }

    // Stable parties refresh their current experts once per window.
    std::map<int, std::vector<int>> refresh;
    for (int p : out.partition.stable) refresh[reg.assignment.at(p)].push_back(p);

    state.personalized.clear();
    if (!out.finetuned.empty()) {
        std::uint64_t gi = 0;
        for (const auto& group : out.groups) {
            const std::uint64_t g = gi++;
            if (group.size() >= th.gamma_min_cluster) continue;
            state.personalized.merge(signal_local_finetune(
                group, reg, datasets, cfg, derive_seed({opt.seed, salt(Stream::train), w, 1000 + g})));
        }
    }

    for (std::size_t r = 1; r <= opt.rounds; ++r) {
        for (const auto& [id, groups] : jobs) {
            std::set<int> cohort;
            std::uint64_t gi = 0;
            for (const auto& group : groups) {
                const auto hs = hists_of(group, reports);
                for (int p : flips_select(hs, th.participant_fraction,
                                          derive_seed({opt.seed, salt(Stream::select), w, r,
                                                       static_cast<std::uint64_t>(id), gi++})))
                    cohort.insert(p);
            }
            const std::vector<int> c(cohort.begin(), cohort.end());
            auto& e = reg.experts.at(id);
            e.params = federated_round(e.params, c, datasets, cfg,
                                       derive_seed({opt.seed, salt(Stream::train), w, r,
                                                    static_cast<std::uint64_t>(id)}));
        }
        if (r == 1) {
            for (const auto& [id, parties] : refresh) {
                const auto hs = hists_of(parties, reports);
                const auto c = flips_select(
                    hs, th.participant_fraction,
                    derive_seed({opt.seed, salt(Stream::select), w, 0, static_cast<std::uint64_t>(id)}));
                auto& e = reg.experts.at(id);
                e.params = federated_round(
                    e.params, c, datasets, cfg,
                    derive_seed({opt.seed, salt(Stream::train), w, 0, static_cast<std::uint64_t>(id)}));
            }
        }
        if (on_round) on_round(r, state);
    }

    reg = consolidate_experts(reg, th.tau_merge, th.u_max, &out.merges,
                              derive_seed({opt.seed, salt(Stream::reservoir), w}));

    // Latent memory: matched groups, then stable parties of each expert.
    std::uint64_t ui = 0;
    for (auto& [id, summary] : memory_updates) {
        const int target = resolve(out.merges, id);
        auto rng = make_rng({opt.seed, salt(Stream::reservoir), w, 1, ui++});
        reg.experts.at(target) = update_latent_memory(reg.experts.at(target), summary.mean, summary.sample,
                                                      th.ema_beta, opt.m_signature, rng);
    }
    for (const auto& [id0, parties] : refresh) {
        const int target = resolve(out.merges, id0);
        std::vector<const PartyReport*> members;
        for (int p : parties) members.push_back(&report_for(reports, p));
        auto rng = make_rng({opt.seed, salt(Stream::reservoir), w, 2, ui++});
        const GroupSummary s = summarize_group(members, opt.m_signature, rng);
        reg.experts.at(target) =
            update_latent_memory(reg.experts.at(target), s.mean, s.sample, th.ema_beta, opt.m_signature, rng);
    }

    // Aggregate label histograms follow the current membership.
    for (auto& [id, e] : reg.experts) {
        const auto parties = reg.parties_of(id);
        if (parties.empty()) continue;
        std::vector<LabelHistogram> hs;
        std::vector<double> ws;
        for (int p : parties) {
            hs.push_back(report_for(reports, p).label_hist);
            ws.push_back(static_cast<double>(std::max<std::size_t>(report_for(reports, p).profile.n_source, 1)));
        }
        e.agg_label_hist = mix_histograms(hs, ws);
    }
    reg.check_invariants(th.u_max);
    return out;
}

BootstrapResult bootstrap(const ModelShape& shape, std::span<const Dataset> datasets, const TrainConfig& cfg,
                          const BootstrapOptions& opt, const RoundCallback& on_round) {
    require(!datasets.empty(), "bootstrap: no parties");
    BootstrapResult res;
    auto& st = res.state;
    st.theta0 = init_model(shape, opt.seed);

    std::vector<std::pair<int, LabelHistogram>> hists;
    for (std::size_t p = 0; p < datasets.size(); ++p)
        hists.emplace_back(static_cast<int>(p), label_histogram(datasets[p].labels, shape.classes));

    ExpertRecord e0;
    e0.expert_id = 0;
    e0.params = st.theta0;
    e0.created_window = 0;
    st.registry.experts.emplace(0, e0);
    st.registry.next_id = 1;
    for (std::size_t p = 0; p < datasets.size(); ++p) st.registry.assignment[static_cast<int>(p)] = 0;

    for (std::size_t r = 1; r <= opt.rounds; ++r) {
        const auto cohort = flips_select(hists, opt.participant_fraction,
                                         derive_seed({opt.seed, salt(Stream::select), 0, r}));
        st.theta0 = federated_round(st.theta0, cohort, datasets, cfg, derive_seed({opt.seed, salt(Stream::train), 0, r}));
        st.registry.experts.at(0).params = st.theta0;
        if (on_round) on_round(r, st);
    }

    // Expert 0's memory comes from every party's bootstrap profile.
    std::vector<PartyReport> full;
    for (std::size_t p = 0; p < datasets.size(); ++p) {
        auto rng = make_rng({opt.seed, salt(Stream::profile), 0, p});
        PartyReport r;
        r.party_id = static_cast<int>(p);
        r.profile = build_profile(st.theta0, datasets[p], opt.m_profile, rng);
        r.label_hist = hists[p].second;
        full.push_back(std::move(r));
    }
    std::vector<const PartyReport*> members;
    for (const auto& r : full) members.push_back(&r);
    auto rng = make_rng({opt.seed, salt(Stream::reservoir), 0});
    const GroupSummary all = summarize_group(members, opt.m_signature, rng);
    auto& rec = st.registry.experts.at(0);
    rec.memory_signature = all.mean;
    rec.signature_sample = all.sample;
    rec.agg_label_hist = all.label_hist;

    // Null reports: a random half of the window against the other half.
    for (std::size_t p = 0; p < datasets.size(); ++p) {
        const Dataset& d = datasets[p];
        if (d.size() < 2) continue;
        for (std::size_t k = 0; k < opt.null_reports_per_party; ++k) {
            auto split_rng = make_rng({opt.seed, salt(Stream::null_split), p, k});
            auto [a, b] = train_test_split(d, 0.5, split_rng);
            auto prof_rng = make_rng({opt.seed, salt(Stream::profile), 1, p, k});
            PreviousWindow prev{build_profile(st.theta0, a, opt.m_profile, prof_rng),
                                label_histogram(a.labels, shape.classes)};
            res.null_reports.push_back(detect_shift(static_cast<int>(p), 0, prev, b, st.theta0, opt.kernel,
                                                    opt.m_profile, prof_rng));
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

nlohmann::json registry_snapshot(const ExpertRegistry& registry, int window) {
    nlohmann::json experts = nlohmann::json::array();
    for (const auto& [id, e] : registry.experts) {
        experts.push_back({{"id", id},
                           {"created_window", e.created_window},
                           {"parties", registry.parties_of(id)},
                           {"signature_mean", e.memory_signature},
                           {"label_hist", e.agg_label_hist.probs()}});
    }
    return {{"window", window}, {"next_id", registry.next_id}, {"experts", experts}};
}

std::size_t registry_footprint_bytes(const ExpertRegistry& registry) {
    std::size_t bytes = 0;
    for (const auto& [id, e] : registry.experts) {
        bytes += sizeof(int) * 2;
        bytes += e.params.weights.size() * sizeof(double);
        bytes += e.memory_signature.size() * sizeof(double);
        bytes += e.signature_sample.data().size() * sizeof(double);
        bytes += e.agg_label_hist.classes() * sizeof(double);
    }
    bytes += registry.assignment.size() * 2 * sizeof(int);
    return bytes;
}

} // namespace shiftex
