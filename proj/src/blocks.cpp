#include "spare/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spare {

namespace {

enum Prop { W = 0, L = 1, H = 2, X = 3, Y = 4, Z = 5 };

constexpr double kZTol = 1e-9;

bool xy_overlap(const State& s, int a, int b) {
  return std::abs(s(a, X) - s(b, X)) < 0.5 * (s(a, W) + s(b, W)) &&
         std::abs(s(a, Y) - s(b, Y)) < 0.5 * (s(a, L) + s(b, L));
}

// b rests immediately on a: footprints overlap and b's bottom meets a's top.
bool immediately_above(const State& s, int b, int a) {
  return b != a && xy_overlap(s, a, b) && std::abs(s(b, Z) - (s(a, Z) + s(a, H))) < kZTol;
}

double center_distance_sq(const State& s, int a, int b) {
  double dx = s(a, X) - s(b, X);
  double dy = s(a, Y) - s(b, Y);
  double dz = (s(a, Z) + 0.5 * s(a, H)) - (s(b, Z) + 0.5 * s(b, H));
  return dx * dx + dy * dy + dz * dz;
}

Domain make_blocks_domain() {
  Domain d;
  d.properties = {"width", "length", "height", "x", "y", "z"};

  d.references.push_back(make_relation_reference(
      "above", 1, Aggregator::Mean,
      [](const State& s, int o, const std::vector<int>& args) {
        return immediately_above(s, o, args[0]);
      }));

  ReferenceFunction above_star;
  above_star.name = "above_star";
  above_star.arity = 1;
  above_star.aggregator = Aggregator::Mean;
  above_star.apply = [](const State& s, const std::vector<ObjectSet>& args) -> ObjectSet {
    ObjectSet out;
    std::vector<int> frontier = args[0];
    std::vector<bool> seen(static_cast<std::size_t>(s.num_objects()), false);
    for (int o : frontier) seen[static_cast<std::size_t>(o)] = true;
    while (!frontier.empty()) {
      std::vector<int> next;
      for (int base : frontier)
        for (int o = 0; o < s.num_objects(); ++o)
          if (!seen[static_cast<std::size_t>(o)] && immediately_above(s, o, base)) {
            seen[static_cast<std::size_t>(o)] = true;
            out.push_back(o);
            next.push_back(o);
          }
      frontier = std::move(next);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  d.references.push_back(std::move(above_star));

  d.references.push_back(make_relation_reference(
      "below", 1, Aggregator::Mean,
      [](const State& s, int o, const std::vector<int>& args) {
        return immediately_above(s, args[0], o);
      }));

  ReferenceFunction nearest;
  nearest.name = "nearest";
  nearest.arity = 1;
  nearest.aggregator = Aggregator::Mean;
  nearest.apply = [](const State& s, const std::vector<ObjectSet>& args) -> ObjectSet {
    ObjectSet out;
    for (int base : args[0]) {
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int o = 0; o < s.num_objects(); ++o) {
        if (o == base) continue;
        double dd = center_distance_sq(s, base, o);
        if (dd < best_d) {
          best_d = dd;
          best = o;
        }
      }
      if (best >= 0) out.push_back(best);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  };
  d.references.push_back(std::move(nearest));

  ActionTemplate push;
  push.name = "push";
  push.param_dim = 4;  // (x_g, y_g, z_g, d)
  push.arity = 1;
  push.program = "push";
  d.action_templates.push_back(std::move(push));

  d.validate();
  return d;
}

void place_block(State& s, int idx, const Block& b) {
  s.at(idx, W) = b.width;
  s.at(idx, L) = b.length;
  s.at(idx, H) = b.height;
  s.at(idx, X) = b.x;
  s.at(idx, Y) = b.y;
  s.at(idx, Z) = b.z;
}

int draw_stack_height(const SceneConfig& cfg, Rng& rng) {
  if (cfg.stack_mix.empty()) return cfg.stack_height;
  double total = 0;
  for (const auto& [h, w] : cfg.stack_mix) total += w;
  double u = rng.uniform() * total;
  double acc = 0;
  for (const auto& [h, w] : cfg.stack_mix) {
    acc += w;
    if (u < acc) return h;
  }
  return cfg.stack_mix.rbegin()->first;
}

// Earliest sweep parameter t in [0, limit] at which moving rectangle `m`
// (axis-aligned, translating along u) first overlaps static rectangle `o`,
// or +inf. Rectangles given as center/half-extent per axis.
double sweep_contact(double mc[2], double mh[2], double oc[2], double oh[2], const double u[2],
                     double limit) {
  double entry = 0.0, exit = limit;
  for (int a = 0; a < 2; ++a) {
    double gap_lo = (oc[a] - oh[a]) - (mc[a] + mh[a]);  // o's low edge minus m's high edge
    double gap_hi = (mc[a] - mh[a]) - (oc[a] + oh[a]);
    if (std::abs(u[a]) < 1e-15) {
      if (gap_lo >= 0 || gap_hi >= 0) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = gap_lo / u[a];
    double t1 = -gap_hi / u[a];  // when m's low edge passes o's high edge
    double lo = std::min(t0, t1), hi = std::max(t0, t1);
    entry = std::max(entry, lo);
    exit = std::min(exit, hi);
  }
  if (entry > exit) return std::numeric_limits<double>::infinity();
  return entry;
}

}  // namespace

const Domain& blocks_domain() {
  static const Domain domain = make_blocks_domain();
  return domain;
}

int property_id(const std::string& name) { return blocks_domain().property_index(name); }

ObjectSet push_closure(const State& state, int target) {
  ObjectSet closure{target};
  ObjectSet above = apply_reference(blocks_domain(), blocks_domain().reference_index("above_star"),
                                    state, {{target}});
  closure.insert(closure.end(), above.begin(), above.end());
  std::sort(closure.begin(), closure.end());
  closure.erase(std::unique(closure.begin(), closure.end()), closure.end());
  return closure;
}

std::pair<std::shared_ptr<const ProblemInstance>, State> sample_instance(const SceneConfig& cfg,
                                                                         Rng& rng) {
  int height = draw_stack_height(cfg, rng);
  if (height < 1) throw std::invalid_argument("stack height must be >= 1");
  int n = height + cfg.num_extra_blocks;

  State s(static_cast<int>(blocks_domain().properties.size()), n);

  auto sample_edge = [&]() { return rng.uniform(cfg.block_edge_min, cfg.block_edge_max); };

  // Stack: bottom on the table, each block's center inside the footprint of
  // the one below, z accumulated from the heights underneath.
  Block below;
  double z_cursor = 0.0;
  for (int i = 0; i < height; ++i) {
    Block b;
    b.width = sample_edge();
    b.length = sample_edge();
    b.height = sample_edge();
    if (i == 0) {
      b.x = rng.uniform(-cfg.stack_center_half_range, cfg.stack_center_half_range);
      b.y = rng.uniform(-cfg.stack_center_half_range, cfg.stack_center_half_range);
    } else {
      b.x = below.x + rng.uniform(-1.0, 1.0) * cfg.stack_offset_frac * below.width;
      b.y = below.y + rng.uniform(-1.0, 1.0) * cfg.stack_offset_frac * below.length;
    }
    b.z = z_cursor;
    z_cursor += b.height;
    place_block(s, i, b);
    below = b;
  }

  // Distractors: clear of every stack block and of each other.
  for (int i = height; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_rejects; ++attempt) {
      Block b;
      b.width = sample_edge();
      b.length = sample_edge();
      b.height = sample_edge();
      b.x = rng.uniform(-cfg.table_half_extent, cfg.table_half_extent);
      b.y = rng.uniform(-cfg.table_half_extent, cfg.table_half_extent);
      b.z = 0.0;
      bool ok = true;
      for (int j = 0; j < height && ok; ++j) {
        double dx = b.x - s(j, X), dy = b.y - s(j, Y);
        if (std::sqrt(dx * dx + dy * dy) < cfg.clearance) ok = false;
      }
      for (int j = height; j < i && ok; ++j) {
        if (std::abs(b.x - s(j, X)) < 0.5 * (b.width + s(j, W)) + 0.01 &&
            std::abs(b.y - s(j, Y)) < 0.5 * (b.length + s(j, L)) + 0.01)
          ok = false;
      }
      if (ok) {
        place_block(s, i, b);
        placed = true;
        break;
      }
    }
    if (!placed) throw std::runtime_error("sample_instance: could not place distractor");
  }

  auto instance = std::make_shared<ProblemInstance>();
  instance->domain = &blocks_domain();
  instance->object_ids.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) instance->object_ids.push_back("b" + std::to_string(i));
  return {std::move(instance), std::move(s)};
}

State step(const State& state, const PushAction& action, double noise_std, Rng& rng) {
  if (action.target < 0 || action.target >= state.num_objects())
    throw std::out_of_range("push target does not exist");
  double eps = noise_std > 0 ? rng.normal(0.0, noise_std) : 0.0;
  double displacement = action.push_distance + eps;

  double ux = state(action.target, X) - action.gripper_x;
  double uy = state(action.target, Y) - action.gripper_y;
  double norm = std::sqrt(ux * ux + uy * uy);
  if (norm < 1e-12) {
    ux = 1.0;
    uy = 0.0;
  } else {
    ux /= norm;
    uy /= norm;
  }
  if (displacement == 0.0) return state;

  ObjectSet movers = push_closure(state, action.target);
  std::vector<bool> is_mover(static_cast<std::size_t>(state.num_objects()), false);
  for (int o : movers) is_mover[static_cast<std::size_t>(o)] = true;
  // Blocks underneath the target stay put and are already interleaved with
  // the movers in xy; only detached blocks are contact candidates.
  std::vector<bool> in_same_stack = is_mover;
  int below_id = blocks_domain().reference_index("below");
  ObjectSet frontier{action.target};
  while (!frontier.empty()) {
    ObjectSet next_frontier;
    for (int o : frontier)
      for (int b : apply_reference(blocks_domain(), below_id, state, {{o}}))
        if (!in_same_stack[static_cast<std::size_t>(b)]) {
          in_same_stack[static_cast<std::size_t>(b)] = true;
          next_frontier.push_back(b);
        }
    frontier = std::move(next_frontier);
  }

  double travel = std::abs(displacement);
  const double dir[2] = {displacement >= 0 ? ux : -ux, displacement >= 0 ? uy : -uy};

  // First contact of any mover footprint with a contact candidate.
  double first_contact = std::numeric_limits<double>::infinity();
  int hit = -1;
  for (int o = 0; o < state.num_objects(); ++o) {
    if (in_same_stack[static_cast<std::size_t>(o)]) continue;
    double oc[2] = {state(o, X), state(o, Y)};
    double oh[2] = {0.5 * state(o, W), 0.5 * state(o, L)};
    for (int m : movers) {
      double mc[2] = {state(m, X), state(m, Y)};
      double mh[2] = {0.5 * state(m, W), 0.5 * state(m, L)};
      double t = sweep_contact(mc, mh, oc, oh, dir, travel);
      if (t < first_contact) {
        first_contact = t;
        hit = o;
      }
    }
  }

  State next = state;
  double stack_travel = std::min(travel, first_contact);
  for (int m : movers) {
    next.at(m, X) += stack_travel * dir[0];
    next.at(m, Y) += stack_travel * dir[1];
  }
  if (hit >= 0 && first_contact < travel) {
    double rest = travel - first_contact;
    next.at(hit, X) += rest * dir[0];
    next.at(hit, Y) += rest * dir[1];
  }
  return next;
}

PushAction push_action_from_instance(const ActionInstance& action) {
  PushAction p;
  p.gripper_x = action.alpha(0);
  p.gripper_y = action.alpha(1);
  p.gripper_z = action.alpha(2);
  p.push_distance = action.alpha(3);
  p.target = action.targets.at(0);
  return p;
}

State run_program(const Domain& domain, const State& state, const ActionInstance& action,
                  double noise_std, Rng& rng) {
  const auto& tmpl = domain.action_templates.at(static_cast<std::size_t>(action.template_id));
  if (tmpl.program != "push")
    throw std::invalid_argument("unknown control program: " + tmpl.program);
  return step(state, push_action_from_instance(action), noise_std, rng);
}

Experience make_experience(const SceneConfig& cfg, uint64_t seed, const std::string& instance_id) {
  Rng rng(seed);
  auto [instance, state] = sample_instance(cfg, rng);
  auto mutable_instance = std::const_pointer_cast<ProblemInstance>(instance);
  mutable_instance->id = instance_id;

  // Stack blocks come first by construction; the bottom block's closure is
  // the whole stack.
  int stack_count = static_cast<int>(push_closure(state, 0).size());

  int target = 0;
  if (cfg.target_policy == TargetPolicy::RandomStackMember && stack_count > 1)
    target = static_cast<int>(rng.integer(static_cast<uint64_t>(stack_count)));

  ActionInstance action;
  action.template_id = blocks_domain().template_index("push");
  action.targets = {target};
  double radius = rng.uniform(cfg.gripper_radius_min, cfg.gripper_radius_max);
  double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  action.alpha = Eigen::VectorXd(4);
  action.alpha(0) = state(target, X) + radius * std::cos(angle);
  action.alpha(1) = state(target, Y) + radius * std::sin(angle);
  action.alpha(2) = rng.uniform(0.0, cfg.gripper_z_max);
  action.alpha(3) = rng.uniform(cfg.push_distance_min, cfg.push_distance_max);

  Experience e;
  e.instance = instance;
  e.state = state;
  e.action = action;
  e.next_state = run_program(blocks_domain(), state, action, cfg.action_noise_std, rng);
  return e;
}

std::vector<Experience> generate_dataset(const SceneConfig& cfg, int count, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("dataset count must be >= 1");
  std::vector<Experience> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    uint64_t exp_seed = derive_seed(seed, "experience", static_cast<uint64_t>(i));
    out.push_back(make_experience(cfg, exp_seed, "i" + std::to_string(i)));
  }
  return out;
}

ObjectSet stack_scope(const Experience& e) {
  ObjectSet scope;
  for (int t : e.action.targets) {
    ObjectSet c = push_closure(e.state, t);
    scope.insert(scope.end(), c.begin(), c.end());
  }
  std::sort(scope.begin(), scope.end());
  scope.erase(std::unique(scope.begin(), scope.end()), scope.end());
  return scope;
}

}  // namespace spare
