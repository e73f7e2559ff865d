#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msfa/numcore/array.hpp"
#include "msfa/numcore/rng.hpp"

namespace msfa::envs {

inline constexpr int kNumActions = 4;

enum class Action : int { kLeft = 0, kRight = 1, kForward = 2, kPickup = 3 };
enum class Direction : int { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

struct Position {
  int x = 0;
  int y = 0;
  friend bool operator==(const Position&, const Position&) = default;
};

Position ahead(Position p, Direction d);

/// An object on the grid. Categories are zero-based (category 0 is the
/// first entry of the task vector).
struct GridObject {
  Position pos;
  int category = 0;
  friend bool operator==(const GridObject&, const GridObject&) = default;
};

struct GridConfig {
  int width = 8;   // interior cells; the boundary beyond them is wall
  int height = 8;
  int num_categories = 4;
  int instances = 3;  // per category
  int horizon = 40;
  int view_size = 5;  // odd edge of the egocentric window

  void validate() const;
  /// One-hot cell channels (categories, wall, empty) plus previous action.
  std::size_t observation_size() const;
  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

/// Complete, read-only copy of the environment state.
struct GridSnapshot {
  GridConfig config;
  std::vector<GridObject> objects;
  Position agent;
  Direction facing = Direction::kNorth;
  int step = 0;
  int prev_action = -1;  // -1 right after reset

  /// Index into `objects` of the object at `p`, or -1.
  int object_at(Position p) const;
  bool in_bounds(Position p) const;
  friend bool operator==(const GridSnapshot&, const GridSnapshot&) = default;
};

/// Egocentric observation, a pure function of the snapshot.
///
/// The window is centred on the agent and rotated so the agent faces the
/// top row. Each cell is one-hot over [category 0..C-1, wall, empty];
/// cells outside the grid read as wall. The agent's own cell is empty.
/// The final kNumActions entries one-hot the previous action (all zero
/// right after reset).
Array render_observation(const GridSnapshot& snapshot);

struct StepResult {
  Array observation;
  Real reward = 0;
  Array cumulant;  // one-hot of the picked category, zero otherwise
  bool done = false;
  int picked_category = -1;
};

/// Pickup/avoid gridworld with respawning objects.
///
/// Actions rotate left/right, move forward into an empty in-bounds cell,
/// or pick up the object directly ahead. A picked object respawns at a
/// uniformly random cell that is neither occupied, the agent's cell, nor
/// the cell it was just taken from. Episodes end after `horizon` steps.
class GridWorld {
 public:
  explicit GridWorld(GridConfig config);

  /// Places C*K objects and the agent uniformly on distinct cells. Requires
  /// at least C*K + 2 cells so a respawn target always exists.
  Array reset(const Array& task, std::uint64_t seed);
  StepResult step(int action);
  /// Starts an episode from an explicit layout. The snapshot must satisfy
  /// the grid invariants; `seed` drives subsequent respawns.
  Array reset_to(const GridSnapshot& layout, const Array& task, std::uint64_t seed);

  GridSnapshot ground_truth_state() const { return state_; }
  const GridConfig& config() const { return config_; }
  const Array& task() const { return task_; }
  bool done() const { return done_; }
  std::size_t observation_size() const { return config_.observation_size(); }

 private:
  GridConfig config_;
  GridSnapshot state_;
  Array task_;
  Rng rng_;
  bool done_ = true;
};

/// Dot product used for every reward so that reward == cumulant · task
/// holds bit-for-bit.
Real task_dot(const Array& cumulant, const Array& task);

std::string action_name(int action);

}  // namespace msfa::envs
