#pragma once

#include <soibag/collision.hpp>
#include <soibag/geometry.hpp>
#include <soibag/manifold.hpp>
#include <soibag/rng.hpp>
#include <soibag/types.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

namespace soibag {

struct PlannerConfig {
  double step = 0.02;            // delta: Chamfer advance per extend step
  int max_iterations = 5000;
  double goal_tolerance = 0.01;  // Chamfer connection tolerance
  Vec3 workspace_min = Vec3(-0.5, -0.5, 0.1);
  Vec3 workspace_max = Vec3(0.5, 0.5, 0.9);
  double displacement_limit = 0.03;  // per keypoint per step
  std::uint64_t rng_seed = 0;
  int shortcut_attempts = 100;
  double collision_margin = 1e-3;

  void validate() const {
    if (!(step > 0.0)) throw ValidationError("planner step must be > 0");
    if (!(goal_tolerance > 0.0))
      throw ValidationError("goal_tolerance must be > 0");
    if (displacement_limit < step)
      throw ValidationError("displacement_limit must be >= step");
    if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
    if (!((workspace_max - workspace_min).minCoeff() > 0.0))
      throw ValidationError("workspace bounds must have positive extents");
  }
};

// Staged rim-subgoal sequence; nodes[handover_index] is the bagging SOI.
struct DeformationPath {
  std::vector<RimState> nodes;
  int handover_index = 0;

  int size() const { return static_cast<int>(nodes.size()); }
};

// Samples a rim configuration directly on the stable manifold: random plane
// and center, aspect ratio in [1, 2.5], radii scaled so the 2000-sample
// polyline perimeter equals omega.
inline RimState sample_random_config(const PlannerConfig& cfg,
                                     const ManifoldParams& params, int n_x,
                                     Rng& rng) {
  Ellipse3D e;
  e.c = rng.uniform_in_box(cfg.workspace_min, cfg.workspace_max);
  const Mat3 rot = rng.random_rotation();
  e.u = rot.col(0);
  e.v = rot.col(1);
  e.beta_b = 1.0;
  e.beta_a = rng.uniform(1.0, 2.5);
  const double chi =
      polyline_perimeter(ellipse3d_sample(e, detail::kEllipseSamples), true);
  const double scale = params.omega / chi;  // perimeter is homogeneous in the radii
  e.beta_a *= scale;
  e.beta_b *= scale;
  return RimState(ellipse3d_sample(e, n_x));
}

// Search tree over rim configurations; nodes carry their fitted ellipse so
// child projections can warm start.
struct PlanTree {
  std::vector<RimState> nodes;
  std::vector<int> parent;
  std::vector<Ellipse3D> ellipse;

  int add(RimState state, int parent_index, const Ellipse3D& fit) {
    nodes.push_back(std::move(state));
    parent.push_back(parent_index);
    ellipse.push_back(fit);
    return static_cast<int>(nodes.size()) - 1;
  }

  int nearest(const RimState& q) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < nodes.size(); ++i) {
      const double d = chamfer(nodes[i].keypoints, q.keypoints);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  std::vector<RimState> chain_to_root(int index) const {
    std::vector<RimState> out;
    for (int i = index; i >= 0; i = parent[i]) out.push_back(nodes[i]);
    return out;  // index-first
  }
};

struct ExtendResult {
  RimState state;
  int node_index = -1;   // index of the reached node in the tree
  double distance = 0.0;  // Chamfer distance from the reached node to target
};

// ConstrainedExtend: steps from the tree node nearest the target toward it,
// clamping per-keypoint displacement, projecting every interpolated
// configuration onto the stable manifold, stopping on collision or stalled
// progress (< step/10 per step).
inline ExtendResult constrained_extend(PlanTree& tree, const RimState& q_target,
                                       const PlannerConfig& cfg,
                                       const ManifoldParams& params,
                                       const std::vector<ObstacleVolume>& obstacles,
                                       int max_steps = 500) {
  int idx = tree.nearest(q_target);
  const Mat3X aligned =
      align_cyclic(q_target.keypoints, tree.nodes[idx].keypoints);
  double dist = chamfer(tree.nodes[idx].keypoints, aligned);

  for (int step_count = 0; step_count < max_steps; ++step_count) {
    if (dist < 1e-9) break;
    const Mat3X& last = tree.nodes[idx].keypoints;
    const double s = std::min(1.0, cfg.step / dist);
    Mat3X cand = last + s * (aligned - last);
    for (int i = 0; i < cand.cols(); ++i) {
      const Vec3 disp = cand.col(i) - last.col(i);
      const double len = disp.norm();
      if (len > cfg.displacement_limit)
        cand.col(i) = last.col(i) + disp * (cfg.displacement_limit / len);
    }

    RimState projected;
    Ellipse3D fit;
    try {
      projected = project_stable_config(RimState(cand), params, {},
                                        &tree.ellipse[idx], &fit);
    } catch (const Error&) {
      break;  // projection failed; stop extending
    }
    if (in_collision(projected, obstacles, cfg.collision_margin)) break;
    const double new_dist = chamfer(projected.keypoints, aligned);
    if (new_dist >= dist - cfg.step / 10.0) break;  // stalled
    idx = tree.add(std::move(projected), idx, fit);
    dist = new_dist;
  }
  return ExtendResult{tree.nodes[idx], idx, dist};
}

namespace detail {

inline Ellipse3D fit_of(const RimState& x, const ManifoldParams& params,
                        const Ellipse3D* hint = nullptr) {
  return fit_stable_ellipse(x, params, {}, hint);
}

inline double path_length(const std::vector<RimState>& nodes) {
  double total = 0.0;
  for (size_t i = 1; i < nodes.size(); ++i)
    total += chamfer(nodes[i - 1].keypoints, nodes[i].keypoints);
  return total;
}

}  // namespace detail

// Bidirectional constrained RRT between two manifold-feasible endpoints.
// Returns the start-to-goal node sequence with exact endpoints.
inline std::vector<RimState> cbirrt(const RimState& x_start,
                                    const RimState& x_goal,
                                    const std::vector<ObstacleVolume>& obstacles,
                                    const PlannerConfig& cfg,
                                    const ManifoldParams& params, Rng& rng) {
  cfg.validate();
  params.validate();
  if (in_collision(x_start, obstacles, cfg.collision_margin))
    throw PlanningFailed("start configuration in collision");
  if (in_collision(x_goal, obstacles, cfg.collision_margin))
    throw PlanningFailed("goal configuration in collision");
  if (chamfer(x_start.keypoints, x_goal.keypoints) <= cfg.goal_tolerance)
    return {x_start};

  const int n_x = x_start.size();
  PlanTree tree_a, tree_b;
  tree_a.add(x_start, -1, detail::fit_of(x_start, params));
  tree_b.add(RimState(align_cyclic(x_goal.keypoints, x_start.keypoints)), -1,
             detail::fit_of(x_goal, params));
  bool a_is_start = true;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const RimState q_rand = sample_random_config(cfg, params, n_x, rng);
    const ExtendResult ra =
        constrained_extend(tree_a, q_rand, cfg, params, obstacles);
    const ExtendResult rb =
        constrained_extend(tree_b, ra.state, cfg, params, obstacles);
    if (chamfer(ra.state.keypoints, rb.state.keypoints) <= cfg.goal_tolerance) {
      std::vector<RimState> from_a = tree_a.chain_to_root(ra.node_index);
      std::reverse(from_a.begin(), from_a.end());  // root (start side) first
      std::vector<RimState> from_b = tree_b.chain_to_root(rb.node_index);
      if (!a_is_start) std::swap(from_a, from_b);
      if (!a_is_start) {
        std::reverse(from_a.begin(), from_a.end());
        std::reverse(from_b.begin(), from_b.end());
      }
      std::vector<RimState> path = std::move(from_a);
      path.insert(path.end(), from_b.begin(), from_b.end());
      return path;
    }
    std::swap(tree_a, tree_b);
    a_is_start = !a_is_start;
  }
  throw PlanningFailed("CBiRRT exhausted its iteration budget");
}

// Shortcut pass plus uniform respacing (every node projected).
inline std::vector<RimState> refine_path(const std::vector<RimState>& raw,
                                         const PlannerConfig& cfg,
                                         const ManifoldParams& params,
                                         const std::vector<ObstacleVolume>& obstacles,
                                         Rng& rng) {
  std::vector<RimState> path = raw;

  // Shortcutting: attempt direct constrained extends between node pairs.
  for (int attempt = 0; attempt < cfg.shortcut_attempts; ++attempt) {
    const int n = static_cast<int>(path.size());
    if (n < 3) break;
    int i = rng.uniform_int(0, n - 1);
    int j = rng.uniform_int(0, n - 1);
    if (i > j) std::swap(i, j);
    if (j - i < 2) continue;

    PlanTree scratch;
    scratch.add(path[i], -1, detail::fit_of(path[i], params));
    const double direct = chamfer(path[i].keypoints, path[j].keypoints);
    const int budget = static_cast<int>(direct / (0.9 * cfg.step)) + 8;
    const ExtendResult res =
        constrained_extend(scratch, path[j], cfg, params, obstacles, budget);
    if (res.distance > cfg.goal_tolerance) continue;

    std::vector<RimState> candidate = scratch.chain_to_root(res.node_index);
    std::reverse(candidate.begin(), candidate.end());
    const double new_len = detail::path_length(candidate) + res.distance;
    const double old_len = detail::path_length(
        std::vector<RimState>(path.begin() + i, path.begin() + j + 1));
    if (new_len >= old_len - 1e-9) continue;

    std::vector<RimState> next(path.begin(), path.begin() + i);
    next.insert(next.end(), candidate.begin(), candidate.end());
    next.insert(next.end(), path.begin() + j, path.end());
    path = std::move(next);
  }

  // Respacing: walk each segment in sub-step increments with projection.
  std::vector<RimState> out;
  out.push_back(path.front());
  Ellipse3D hint = detail::fit_of(path.front(), params);
  for (size_t seg = 1; seg < path.size(); ++seg) {
    const RimState& target = path[seg];
    int guard = 0;
    while (true) {
      const RimState& last = out.back();
      const Mat3X aligned = align_cyclic(target.keypoints, last.keypoints);
      const double d = chamfer(last.keypoints, aligned);
      if (d <= cfg.step || ++guard > 400) break;
      const double s = std::min(1.0, 0.9 * cfg.step / d);
      const Mat3X cand = last.keypoints + s * (aligned - last.keypoints);
      RimState projected =
          project_stable_config(RimState(cand), params, {}, &hint, &hint);
      if (chamfer(projected.keypoints, last.keypoints) < 1e-9) break;
      out.push_back(std::move(projected));
    }
    if (chamfer(out.back().keypoints, target.keypoints) > 1e-9)
      out.push_back(target);
  }
  return out;
}

// Two-stage plan: pre-bagging (x0 -> x_dag) then bagging (x_dag -> x_star),
// each CBiRRT-planned and refined, concatenated with the handover node
// appearing once. Endpoints are projected and the goals re-indexed to the
// start's cyclic indexing before planning.
inline DeformationPath plan(const RimState& x0, const RimState& x_dag,
                            const RimState& x_star,
                            const std::vector<ObstacleVolume>& obstacles,
                            const PlannerConfig& cfg,
                            const ManifoldParams& params) {
  cfg.validate();
  params.validate();
  Rng rng(cfg.rng_seed);

  const RimState p0 = project_stable_config(x0, params);
  const CyclicAlignment indexing =
      find_cyclic_alignment(x_dag.keypoints, p0.keypoints);
  const RimState p_dag = project_stable_config(
      RimState(apply_cyclic_alignment(x_dag.keypoints, indexing)), params);
  const RimState p_star = project_stable_config(
      RimState(apply_cyclic_alignment(x_star.keypoints, indexing)), params);

  std::vector<RimState> pre, bag;
  try {
    pre = refine_path(cbirrt(p0, p_dag, obstacles, cfg, params, rng), cfg,
                      params, obstacles, rng);
  } catch (const PlanningFailed& e) {
    throw PlanningFailed(std::string("pre-bagging stage: ") + e.what());
  }
  try {
    bag = refine_path(cbirrt(p_dag, p_star, obstacles, cfg, params, rng), cfg,
                      params, obstacles, rng);
  } catch (const PlanningFailed& e) {
    throw PlanningFailed(std::string("bagging stage: ") + e.what());
  }

  DeformationPath path;
  path.nodes = std::move(pre);
  path.handover_index = static_cast<int>(path.nodes.size()) - 1;
  path.nodes.insert(path.nodes.end(),
                    std::make_move_iterator(bag.begin() + 1),
                    std::make_move_iterator(bag.end()));
  return path;
}

}  // namespace soibag
