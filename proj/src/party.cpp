#include "shiftex/party.hpp"

#include <algorithm>
#include <numeric>

#include "shiftex/errors.hpp"

namespace shiftex {

LatentProfile build_profile(const ModelParams& params, const Dataset& data, std::size_t m_profile, Rng& rng) {
    require(!data.empty(), "build_profile: empty dataset");
    require(m_profile >= 1, "build_profile: m_profile must be >= 1");
    const EmbeddingSet all = embed_all(params, data);
    LatentProfile p;
    p.mean = all.mean();
    p.n_source = data.size();
    if (all.rows() <= m_profile) {
        p.sample = all;
    } else {
        std::vector<std::size_t> idx(all.rows());
        std::iota(idx.begin(), idx.end(), 0);
        std::vector<std::size_t> keep;
        std::sample(idx.begin(), idx.end(), std::back_inserter(keep), static_cast<std::ptrdiff_t>(m_profile), rng);
        p.sample = all.select(keep);
    }
    return p;
}

PartyReport detect_shift(int party_id, int window_index, const std::optional<PreviousWindow>& prev,
                         const Dataset& cur_data, const ModelParams& params, const KernelSpec& kernel,
                         std::size_t m_profile, Rng& rng) {
    require(!cur_data.empty(), "detect_shift: empty window");
    PartyReport r;
    r.party_id = party_id;
    r.window_index = window_index;
    r.profile = build_profile(params, cur_data, m_profile, rng);
    r.label_hist = label_histogram(cur_data.labels, params.shape.classes);
    if (prev) {
        r.delta_cov = mmd_squared(r.profile.sample, prev->profile.sample, kernel);
        r.delta_label = jsd(r.label_hist, prev->label_hist);
    }
    return r;
}

nlohmann::json report_to_json(const PartyReport& report) {
    nlohmann::json sample = nlohmann::json::array();
    for (std::size_t i = 0; i < report.profile.sample.rows(); ++i) {
        auto row = report.profile.sample.row(i);
        sample.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return {{"party_id", report.party_id},
            {"window", report.window_index},
            {"profile", {{"mean", report.profile.mean}, {"n_source", report.profile.n_source}, {"sample", sample}}},
            {"label_hist", report.label_hist.probs()},
            {"delta_cov", report.delta_cov},
            {"delta_label", report.delta_label}};
}

PartyReport report_from_json(const nlohmann::json& j) {
    PartyReport r;
    r.party_id = j.at("party_id").get<int>();
    r.window_index = j.at("window").get<int>();
    const auto& p = j.at("profile");
    r.profile.mean = p.at("mean").get<std::vector<double>>();
    r.profile.n_source = p.at("n_source").get<std::size_t>();
    r.profile.sample = EmbeddingSet::from_rows(p.at("sample").get<std::vector<std::vector<double>>>());
    require(r.profile.sample.dim() == r.profile.mean.size(), "report: profile mean and sample disagree in dimension");
    r.label_hist = LabelHistogram(j.at("label_hist").get<std::vector<double>>());
    r.delta_cov = j.at("delta_cov").get<double>();
    r.delta_label = j.at("delta_label").get<double>();
    return r;
}

} // namespace shiftex
