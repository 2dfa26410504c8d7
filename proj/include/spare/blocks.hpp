#pragma once

#include "spare/relational.hpp"
#include "spare/rng.hpp"

#include <map>
#include <utility>
#include <vector>

namespace spare {

// Kinematic surrogate for a gripper pushing stacks of blocks on a table.
// Blocks are axis-aligned boxes; z is the height of the bottom face above the
// table. Properties, in order: width, length, height, x, y, z.
//
// Push dynamics: the target and every block transitively above it translate
// by (d + eps) along the unit xy-direction from the gripper to the target,
// with eps drawn once per action. If the swept stack footprint hits a
// distractor, the stack stops at first contact and that distractor takes the
// remaining displacement (pass-through contact). Everything else is frozen;
// shapes and z never change.

struct Block {
  double width = 0, length = 0, height = 0;
  double x = 0, y = 0, z = 0;
  std::string id;
};

struct PushAction {
  double gripper_x = 0, gripper_y = 0, gripper_z = 0;
  double push_distance = 0;
  int target = 0;
};

enum class TargetPolicy { StackBottom, RandomStackMember };

struct SceneConfig {
  int stack_height = 3;
  int num_extra_blocks = 0;
  // Optional stack-height mixture, e.g. {2: .15, 3: .15, 4: .70}; when empty
  // every instance uses stack_height.
  std::map<int, double> stack_mix;

  double block_edge_min = 0.04, block_edge_max = 0.10;  // all three dimensions
  double table_half_extent = 0.45;                      // 1 m x 1 m table with margin
  // Stacks are placed near the table center (robot workspace); distractors
  // use the whole table.
  double stack_center_half_range = 0.10;
  double stack_offset_frac = 0.4;   // upper-block center offset, fraction of lower extent
  double clearance = 0.25;          // min xy center distance distractor <-> stack block
  // The gripper starts a fixed approach distance from the target, at a
  // uniformly random angle.
  double gripper_radius_min = 0.15, gripper_radius_max = 0.15;
  double gripper_z_max = 0.05;
  double push_distance_min = 0.02, push_distance_max = 0.15;
  double action_noise_std = 0.005;
  TargetPolicy target_policy = TargetPolicy::StackBottom;
  int max_rejects = 1000;

  uint64_t rng_seed = 0;
};

// The pushing domain: 6 properties, references {above, above_star, below,
// nearest}, and a single `push` template with alpha = (x_g, y_g, z_g, d).
const Domain& blocks_domain();

int property_id(const std::string& name);  // into blocks_domain()

// Samples one stable stack plus clear distractors. Throws std::runtime_error
// after cfg.max_rejects failed placement attempts.
std::pair<std::shared_ptr<const ProblemInstance>, State> sample_instance(const SceneConfig& cfg,
                                                                         Rng& rng);

// Objects moved by pushing `target`: the target plus its transitive above-closure.
ObjectSet push_closure(const State& state, int target);

State step(const State& state, const PushAction& action, double noise_std, Rng& rng);

PushAction push_action_from_instance(const ActionInstance& action);

// Runs the template's control program for one experience transition.
State run_program(const Domain& domain, const State& state, const ActionInstance& action,
                  double noise_std, Rng& rng);

Experience make_experience(const SceneConfig& cfg, uint64_t seed, const std::string& instance_id);

// `count` experiences, one fresh instance each; per-experience seeds are
// derived from `seed`, so the result does not depend on generation order.
std::vector<Experience> generate_dataset(const SceneConfig& cfg, int count, uint64_t seed);

// Stack scope of an experience: targets plus their above-closure in the
// pre-action state (the objects a push can move).
ObjectSet stack_scope(const Experience& e);

}  // namespace spare
