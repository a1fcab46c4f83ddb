#pragma once

// Constrained NSGA-II over integer green-time genomes.
//
// One gene per link (in link order) holds that link's green seconds on the
// configured grid [min_green_s, max_green_s] with step green_step_s. Variation
// operators never leave the grid, so every individual is feasible and the
// search space is small enough to enumerate in tests.
//
// Besides the usual (mu + lambda) population, run() keeps an elitist archive
// of every non-dominated objective vector seen so far. The archive is what
// run() returns; its hypervolume can only grow from one generation to the
// next, which the crowding-truncated population alone does not guarantee.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "sigsched/core.hpp"
#include "sigsched/objectives.hpp"

namespace sigsched::nsga2 {

using Rng = std::mt19937_64;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Genome {
  std::vector<Seconds> greens;
  auto operator<=>(const Genome&) const = default;
};

struct Individual {
  Genome genome;
  ObjectiveVector objectives;
  std::size_t rank = 0;
  double crowding = 0.0;
  bool feasible = true;
};

using ParetoFront = std::vector<Individual>;

struct OptimizerParams {
  std::size_t population_size = 60;
  std::size_t generations = 100;
  double crossover_prob = 0.9;
  std::optional<double> mutation_prob;  // defaults to 1/L
  std::size_t tournament_size = 2;
  std::uint64_t rng_seed = 1;
  ObjectiveOptions objectives;
  Seconds guidance_pad_s = 0;

  double mutation_rate(std::size_t num_links) const {
    return mutation_prob.value_or(1.0 / static_cast<double>(num_links));
  }
};

inline void validate(const OptimizerParams& p) {
  if (p.population_size < 4 || p.population_size % 2 != 0)
    throw ValidationError("population_size must be an even integer >= 4");
  if (p.generations < 1) throw ValidationError("generations must be >= 1");
  if (p.crossover_prob < 0.0 || p.crossover_prob > 1.0) throw ValidationError("crossover_prob must be in [0, 1]");
  if (p.mutation_prob && (*p.mutation_prob < 0.0 || *p.mutation_prob > 1.0))
    throw ValidationError("mutation_prob must be in [0, 1]");
  if (p.tournament_size < 2) throw ValidationError("tournament_size must be >= 2");
  if (p.guidance_pad_s < 0) throw ValidationError("guidance_pad_s must be >= 0");
}

// Both objectives are minimized.
inline bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  return a.f1 <= b.f1 && a.f2 <= b.f2 && (a.f1 < b.f1 || a.f2 < b.f2);
}

// Deb's fast non-dominated sort. Returns fronts as index lists (ascending
// within each front) and writes each individual's rank.
inline std::vector<std::vector<std::size_t>> fast_non_dominated_sort(std::vector<Individual>& pop) {
  const std::size_t n = pop.size();
  std::vector<std::vector<std::size_t>> dominated_by_me(n);
  std::vector<std::size_t> domination_count(n, 0);
  std::vector<std::vector<std::size_t>> fronts;
  std::vector<std::size_t> current;

  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      if (dominates(pop[p].objectives, pop[q].objectives)) {
        dominated_by_me[p].push_back(q);
        ++domination_count[q];
      } else if (dominates(pop[q].objectives, pop[p].objectives)) {
        dominated_by_me[q].push_back(p);
        ++domination_count[p];
      }
    }
  }
  for (std::size_t p = 0; p < n; ++p)
    if (domination_count[p] == 0) current.push_back(p);

  std::size_t rank = 0;
  while (!current.empty()) {
    std::vector<std::size_t> next;
    for (std::size_t p : current) {
      pop[p].rank = rank;
      for (std::size_t q : dominated_by_me[p])
        if (--domination_count[q] == 0) next.push_back(q);
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(current));
    current = std::move(next);
    ++rank;
  }
  return fronts;
}

// Crowding distance of each point of a single front. Extremes along an
// objective get +inf; an objective whose range is zero contributes nothing.
inline std::vector<double> crowding_distance(std::span<const ObjectiveVector> front) {
  const std::size_t n = front.size();
  std::vector<double> dist(n, 0.0);
  if (n <= 2) {
    std::fill(dist.begin(), dist.end(), kInfinity);
    return dist;
  }
  std::vector<std::size_t> order(n);
  auto accumulate = [&](auto key) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return key(front[a]) < key(front[b]); });
    const double lo = static_cast<double>(key(front[order.front()]));
    const double hi = static_cast<double>(key(front[order.back()]));
    if (hi == lo) return;
    dist[order.front()] = kInfinity;
    dist[order.back()] = kInfinity;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      const double gap = static_cast<double>(key(front[order[k + 1]]) - key(front[order[k - 1]]));
      dist[order[k]] += gap / (hi - lo);
    }
  };
  accumulate([](const ObjectiveVector& v) { return v.f1; });
  accumulate([](const ObjectiveVector& v) { return v.f2; });
  return dist;
}

inline void assign_crowding(std::vector<Individual>& pop, const std::vector<std::size_t>& front) {
  std::vector<ObjectiveVector> objs;
  objs.reserve(front.size());
  for (std::size_t i : front) objs.push_back(pop[i].objectives);
  const auto d = crowding_distance(objs);
  for (std::size_t k = 0; k < front.size(); ++k) pop[front[k]].crowding = d[k];
}

// Crowded comparison: lower rank, then larger crowding, then lower index.
inline bool crowded_better(const std::vector<Individual>& pop, std::size_t a, std::size_t b) {
  if (pop[a].rank != pop[b].rank) return pop[a].rank < pop[b].rank;
  if (pop[a].crowding != pop[b].crowding) return pop[a].crowding > pop[b].crowding;
  return a < b;
}

inline std::size_t tournament_select(const std::vector<Individual>& pop, std::size_t k, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
  std::size_t best = pick(rng);
  for (std::size_t i = 1; i < k; ++i) {
    const std::size_t c = pick(rng);
    if (crowded_better(pop, c, best)) best = c;
  }
  return best;
}

// Uniform crossover: with probability `prob` the pair exchanges each gene
// with probability 1/2.
inline std::pair<Genome, Genome> crossover(const Genome& a, const Genome& b, double prob, Rng& rng) {
  Genome c1 = a, c2 = b;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < prob) {
    for (std::size_t i = 0; i < c1.greens.size(); ++i)
      if (u(rng) < 0.5) std::swap(c1.greens[i], c2.greens[i]);
  }
  return {std::move(c1), std::move(c2)};
}

// Per-gene uniform redraw over the green grid.
inline Genome mutate(Genome g, double prob, const IntersectionConfig& cfg, Rng& rng) {
  const std::size_t levels = cfg.green_levels();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> level(0, levels - 1);
  for (auto& gene : g.greens)
    if (u(rng) < prob && levels > 1) gene = cfg.green_level(level(rng));
  return g;
}

// Snap every gene to the nearest grid value inside the bounds.
inline Genome repair(Genome g, const IntersectionConfig& cfg) {
  for (auto& gene : g.greens) {
    gene = std::clamp(gene, cfg.min_green_s, cfg.max_green_s);
    const Seconds off = (gene - cfg.min_green_s) % cfg.green_step_s;
    if (off != 0) gene += (2 * off >= cfg.green_step_s) ? cfg.green_step_s - off : -off;
    gene = std::min(gene, cfg.max_green_s);
  }
  return g;
}

inline Genome random_genome(const IntersectionConfig& cfg, Rng& rng) {
  std::uniform_int_distribution<std::size_t> level(0, cfg.green_levels() - 1);
  Genome g;
  g.greens.reserve(cfg.num_links);
  for (std::size_t i = 0; i < cfg.num_links; ++i) g.greens.push_back(cfg.green_level(level(rng)));
  return g;
}

inline SignalPlan to_plan(const Genome& g, const IntersectionConfig& cfg, Seconds guidance_pad_s = 0) {
  SignalPlan plan;
  plan.inter_green_s = cfg.inter_green_s;
  plan.guidance_pad_s = guidance_pad_s;
  for (std::size_t i = 0; i < g.greens.size(); ++i) plan.phases.push_back({LinkId{i}, g.greens[i]});
  return plan;
}

// Area dominated by a two-objective front and bounded by `ref`.
inline double hypervolume(std::span<const ObjectiveVector> front, ObjectiveVector ref) {
  std::vector<ObjectiveVector> pts;
  for (const auto& p : front)
    if (p.f1 < ref.f1 && p.f2 < ref.f2) pts.push_back(p);
  std::sort(pts.begin(), pts.end());
  double area = 0.0;
  std::int64_t best_f2 = ref.f2;
  for (const auto& p : pts) {
    if (p.f2 >= best_f2) continue;
    area += static_cast<double>(ref.f1 - p.f1) * static_cast<double>(best_f2 - p.f2);
    best_f2 = p.f2;
  }
  return area;
}

// Non-dominated archive keyed by objective vector. Equal vectors keep the
// lexicographically smallest genome so the content is order independent.
class Archive {
 public:
  void offer(const Individual& ind) {
    auto same = members_.find(ind.objectives);
    if (same != members_.end()) {
      if (ind.genome < same->second) same->second = ind.genome;
      return;
    }
    for (const auto& [obj, _] : members_)
      if (dominates(obj, ind.objectives)) return;
    std::erase_if(members_, [&](const auto& kv) { return dominates(ind.objectives, kv.first); });
    members_.emplace(ind.objectives, ind.genome);
  }

  std::vector<ObjectiveVector> objectives() const {
    std::vector<ObjectiveVector> out;
    for (const auto& [obj, _] : members_) out.push_back(obj);
    return out;
  }

  ParetoFront front() const {
    ParetoFront out;
    for (const auto& [obj, genome] : members_) out.push_back({genome, obj, 0, 0.0, true});
    std::vector<ObjectiveVector> objs = objectives();
    const auto d = crowding_distance(objs);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].crowding = d[i];
    return out;
  }

  std::size_t size() const { return members_.size(); }

 private:
  std::map<ObjectiveVector, Genome> members_;
};

struct GenerationSnapshot {
  std::size_t generation = 0;  // 0 is the initial population
  const Archive* archive = nullptr;
  const std::vector<Individual>* population = nullptr;
};

using GenerationObserver = std::function<void(const GenerationSnapshot&)>;

inline Individual make_individual(Genome g, const QueueState& queue, const IntersectionConfig& cfg,
                                  const OptimizerParams& params) {
  Individual ind;
  ind.objectives = evaluate(to_plan(g, cfg, params.guidance_pad_s), queue, cfg, params.objectives);
  ind.genome = std::move(g);
  return ind;
}

// Rank and crowding for the whole population, front by front.
inline std::vector<std::vector<std::size_t>> rank_population(std::vector<Individual>& pop) {
  auto fronts = fast_non_dominated_sort(pop);
  for (const auto& f : fronts) assign_crowding(pop, f);
  return fronts;
}

inline ParetoFront run(const QueueState& queue, const IntersectionConfig& cfg, const OptimizerParams& params,
                       const GenerationObserver& observer = {}) {
  validate(params);
  validate(queue, cfg.num_links);

  Rng rng(params.rng_seed);
  const std::size_t n = params.population_size;
  const double pm = params.mutation_rate(cfg.num_links);
  Archive archive;

  std::vector<Individual> pop;
  pop.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    pop.push_back(make_individual(random_genome(cfg, rng), queue, cfg, params));
    archive.offer(pop.back());
  }
  rank_population(pop);
  if (observer) observer({0, &archive, &pop});

  for (std::size_t gen = 1; gen <= params.generations; ++gen) {
    std::vector<Individual> combined = pop;
    while (combined.size() < 2 * n) {
      const std::size_t a = tournament_select(pop, params.tournament_size, rng);
      const std::size_t b = tournament_select(pop, params.tournament_size, rng);
      auto [c1, c2] = crossover(pop[a].genome, pop[b].genome, params.crossover_prob, rng);
      for (Genome* child : {&c1, &c2}) {
        if (combined.size() >= 2 * n) break;
        combined.push_back(make_individual(repair(mutate(std::move(*child), pm, cfg, rng), cfg), queue, cfg, params));
        archive.offer(combined.back());
      }
    }

    auto fronts = fast_non_dominated_sort(combined);
    std::vector<Individual> next;
    next.reserve(2 * n);
    for (const auto& front : fronts) {
      if (next.size() + front.size() <= n) {
        for (std::size_t i : front) next.push_back(combined[i]);
        continue;
      }
      assign_crowding(combined, front);
      std::vector<std::size_t> order = front;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t x, std::size_t y) { return combined[x].crowding > combined[y].crowding; });
      for (std::size_t k = 0; next.size() < n; ++k) next.push_back(combined[order[k]]);
      break;
    }
    pop = std::move(next);
    rank_population(pop);
    if (observer) observer({gen, &archive, &pop});
  }
  return archive.front();
}

// ---------------------------------------------------------------------------
// Choosing one plan from the front

struct SelectionPolicy {
  enum class Kind { Knee, Weighted, MinF1, MinF2 };
  Kind kind = Kind::Knee;
  double w1 = 0.5;
  double w2 = 0.5;

  static SelectionPolicy knee() { return {}; }
  static SelectionPolicy weighted(double w1, double w2) { return {Kind::Weighted, w1, w2}; }
  static SelectionPolicy min_f1() { return {Kind::MinF1}; }
  static SelectionPolicy min_f2() { return {Kind::MinF2}; }
};

inline SelectionPolicy parse_policy(const std::string& name, double w1 = 0.5, double w2 = 0.5) {
  if (name == "knee") return SelectionPolicy::knee();
  if (name == "weighted") return SelectionPolicy::weighted(w1, w2);
  if (name == "min_f1") return SelectionPolicy::min_f1();
  if (name == "min_f2") return SelectionPolicy::min_f2();
  throw ValidationError("unknown selection policy '" + name + "'");
}

inline std::string policy_name(const SelectionPolicy& p) {
  switch (p.kind) {
    case SelectionPolicy::Kind::Knee: return "knee";
    case SelectionPolicy::Kind::Weighted: return "weighted";
    case SelectionPolicy::Kind::MinF1: return "min_f1";
    case SelectionPolicy::Kind::MinF2: return "min_f2";
  }
  return "knee";
}

// Index of the chosen member. Scores are normalized by the front's range per
// objective (zero range scores 0); ties go to lower f1, lower f2, then the
// lexicographically smaller genome.
inline std::size_t select_index(const ParetoFront& front, const SelectionPolicy& policy) {
  if (front.empty()) throw ValidationError("select_operating_point: empty front");
  std::int64_t lo1 = front[0].objectives.f1, hi1 = lo1, lo2 = front[0].objectives.f2, hi2 = lo2;
  for (const auto& m : front) {
    lo1 = std::min(lo1, m.objectives.f1);
    hi1 = std::max(hi1, m.objectives.f1);
    lo2 = std::min(lo2, m.objectives.f2);
    hi2 = std::max(hi2, m.objectives.f2);
  }
  auto norm = [](std::int64_t v, std::int64_t lo, std::int64_t hi) {
    return hi == lo ? 0.0 : static_cast<double>(v - lo) / static_cast<double>(hi - lo);
  };
  auto score = [&](const Individual& m) {
    const double n1 = norm(m.objectives.f1, lo1, hi1);
    const double n2 = norm(m.objectives.f2, lo2, hi2);
    switch (policy.kind) {
      case SelectionPolicy::Kind::Knee: return std::sqrt(n1 * n1 + n2 * n2);
      case SelectionPolicy::Kind::Weighted: return policy.w1 * n1 + policy.w2 * n2;
      case SelectionPolicy::Kind::MinF1: return static_cast<double>(m.objectives.f1);
      case SelectionPolicy::Kind::MinF2: return static_cast<double>(m.objectives.f2);
    }
    return 0.0;
  };
  std::size_t best = 0;
  double best_score = score(front[0]);
  for (std::size_t i = 1; i < front.size(); ++i) {
    const double s = score(front[i]);
    const auto& a = front[i];
    const auto& b = front[best];
    const bool better =
        s < best_score ||
        (s == best_score &&
         std::tie(a.objectives.f1, a.objectives.f2, a.genome) < std::tie(b.objectives.f1, b.objectives.f2, b.genome));
    if (better) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

inline SignalPlan select_operating_point(const ParetoFront& front, const SelectionPolicy& policy,
                                         const IntersectionConfig& cfg, Seconds guidance_pad_s = 0) {
  return to_plan(front[select_index(front, policy)].genome, cfg, guidance_pad_s);
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(json& j, const Individual& ind) {
  j = json{{"genome", ind.genome.greens},
           {"f1", ind.objectives.f1},
           {"f2", ind.objectives.f2},
           {"rank", ind.rank},
           {"crowding", std::isinf(ind.crowding) ? json("inf") : json(ind.crowding)}};
}

inline void to_json(json& j, const OptimizerParams& p) {
  j = json{{"population_size", p.population_size},
           {"generations", p.generations},
           {"crossover_prob", p.crossover_prob},
           {"tournament_size", p.tournament_size},
           {"rng_seed", p.rng_seed},
           {"guidance_pad_s", p.guidance_pad_s},
           {"include_inter_green", p.objectives.include_inter_green},
           {"queue_weighted_red", p.objectives.queue_weighted_red}};
  if (p.mutation_prob) j["mutation_prob"] = *p.mutation_prob;
}

inline void from_json(const json& j, OptimizerParams& p) {
  OptimizerParams d;
  p.population_size = j.value("population_size", d.population_size);
  p.generations = j.value("generations", d.generations);
  p.crossover_prob = j.value("crossover_prob", d.crossover_prob);
  p.mutation_prob = j.contains("mutation_prob") ? std::optional<double>(j.at("mutation_prob").get<double>())
                                                : std::nullopt;
  p.tournament_size = j.value("tournament_size", d.tournament_size);
  p.rng_seed = j.value("rng_seed", d.rng_seed);
  p.guidance_pad_s = j.value("guidance_pad_s", d.guidance_pad_s);
  p.objectives.include_inter_green = j.value("include_inter_green", d.objectives.include_inter_green);
  p.objectives.queue_weighted_red = j.value("queue_weighted_red", d.objectives.queue_weighted_red);
}

}  // namespace sigsched::nsga2
