#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "shiftex/numerics.hpp"

namespace shiftex {

struct AssignmentParty {
    int id = 0;
    EmbeddingSet sample;
    LabelHistogram label_hist;
    double sample_count = 1.0;   // weight in the expert's label mixture
};

/// An existing expert or a candidate new one. For candidates `sample` is the
/// founding cluster's pooled sample and `members`, when given, is that
/// cluster's party list.
struct AssignmentFacility {
    int id = 0;
    EmbeddingSet sample;
    std::optional<std::vector<int>> members;
};

struct AssignmentProblem {
    std::vector<AssignmentParty> parties;
    std::vector<AssignmentFacility> existing;
    std::vector<AssignmentFacility> candidates;
    double lambda_open = 0.5;
    double mu_balance = 0.5;
    std::optional<std::size_t> u_max;
    std::optional<LabelHistogram> reference_hist;   // uniform when unset
    KernelSpec kernel = KernelSpec::median();
    // Optional explicit MMD costs, [party][facility] with existing experts
    // first, then candidates. Replaces the sample comparison when present.
    std::optional<std::vector<std::vector<double>>> costs;

    void validate() const;
    std::size_t facility_count() const { return existing.size() + candidates.size(); }
    int facility_id(std::size_t f) const;
    bool is_candidate(std::size_t f) const { return f >= existing.size(); }
    LabelHistogram reference() const;
};

/// Party-by-facility MMD² costs in problem order.
std::vector<std::vector<double>> cost_matrix(const AssignmentProblem& problem);

struct AssignmentSolution {
    std::map<std::pair<int, int>, int> z;   // (party id, facility id) -> 0/1
    std::map<int, int> w;                   // candidate id -> 0/1
    double objective = 0.0;

    /// Facility chosen by a party (the single z = 1 entry), if unique.
    std::optional<int> choice(int party_id) const;
    std::size_t opened() const;
};

struct Feasibility {
    bool ok = true;
    std::vector<std::string> violations;
};

Feasibility check_feasibility(const AssignmentProblem& problem, const AssignmentSolution& solution);

/// MMD cost + lambda per opened candidate + mu * JSD(label mixture, reference)
/// per expert with at least one party. Throws on infeasible solutions.
double objective_value(const AssignmentProblem& problem, const AssignmentSolution& solution);

inline constexpr std::size_t exact_max_parties = 12;
inline constexpr std::size_t exact_max_facilities = 5;

/// Global optimum by enumerating opened-candidate subsets, then the best
/// assignment per subset (argmin per party when unconstrained, branch and
/// bound otherwise). Ties go to the lexicographically smallest choice.
AssignmentSolution solve_exact(const AssignmentProblem& problem);

/// Cluster-then-match heuristic: each candidate's cluster goes to the
/// cheapest existing expert unless opening the candidate is cheaper by more
/// than lambda; capacity overflows are repaired afterwards.
AssignmentSolution solve_greedy(const AssignmentProblem& problem);

nlohmann::json problem_to_json(const AssignmentProblem& problem);
AssignmentProblem problem_from_json(const nlohmann::json& j);
nlohmann::json solution_to_json(const AssignmentSolution& solution);

/// Seeded instance inside the exact envelope, built from Gaussian blobs.
AssignmentProblem random_problem(std::uint64_t seed);

} // namespace shiftex
