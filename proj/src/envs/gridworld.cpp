#include "msfa/envs/gridworld.hpp"

#include <algorithm>

namespace msfa::envs {

namespace {

Position offset(Position p, int dx, int dy) { return {p.x + dx, p.y + dy}; }

struct Frame {
  int fx, fy;  // forward
  int rx, ry;  // right
};

Frame frame_of(Direction d) {
  switch (d) {
    case Direction::kNorth: return {0, -1, 1, 0};
    case Direction::kEast: return {1, 0, 0, 1};
    case Direction::kSouth: return {0, 1, -1, 0};
    case Direction::kWest: return {-1, 0, 0, -1};
  }
  throw ContractError("invalid direction");
}

void require_capacity(const GridConfig& c) {
  if (c.width * c.height < c.num_categories * c.instances + 2) {
    throw ConfigError("grid " + std::to_string(c.width) + "x" + std::to_string(c.height) + " cannot hold " +
                      std::to_string(c.num_categories * c.instances) + " objects, the agent and a free respawn cell");
  }
}

}  // namespace

Position ahead(Position p, Direction d) {
  const Frame f = frame_of(d);
  return offset(p, f.fx, f.fy);
}

void GridConfig::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("grid dimensions must be positive");
  if (num_categories <= 0 || instances <= 0) throw ConfigError("category and instance counts must be positive");
  if (horizon <= 0) throw ConfigError("horizon must be positive");
  if (view_size <= 0 || view_size % 2 == 0) throw ConfigError("view_size must be a positive odd integer");
}

std::size_t GridConfig::observation_size() const {
  return static_cast<std::size_t>(view_size * view_size * (num_categories + 2) + kNumActions);
}

bool GridSnapshot::in_bounds(Position p) const {
  return p.x >= 0 && p.y >= 0 && p.x < config.width && p.y < config.height;
}

int GridSnapshot::object_at(Position p) const {
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].pos == p) return static_cast<int>(i);
  return -1;
}

Array render_observation(const GridSnapshot& s) {
  const int v = s.config.view_size;
  const int half = v / 2;
  const int channels = s.config.num_categories + 2;
  const int wall = s.config.num_categories;
  const int empty = wall + 1;
  Array obs(Shape{s.config.observation_size()});

  std::vector<int> cell(static_cast<std::size_t>(s.config.width * s.config.height), -1);
  for (const auto& o : s.objects) cell[static_cast<std::size_t>(o.pos.y * s.config.width + o.pos.x)] = o.category;

  const auto [fx, fy, rx, ry] = frame_of(s.facing);
  for (int row = 0; row < v; ++row) {
    for (int col = 0; col < v; ++col) {
      const int along = half - row;  // cells ahead of the agent
      const int side = col - half;   // cells to the agent's right
      const Position p{s.agent.x + side * rx + along * fx, s.agent.y + side * ry + along * fy};
      int channel;
      if (!s.in_bounds(p)) {
        channel = wall;
      } else {
        const int c = cell[static_cast<std::size_t>(p.y * s.config.width + p.x)];
        channel = c >= 0 ? c : empty;
      }
      obs[static_cast<std::size_t>((row * v + col) * channels + channel)] = 1;
    }
  }
  if (s.prev_action >= 0) obs[static_cast<std::size_t>(v * v * channels + s.prev_action)] = 1;
  return obs;
}

Real task_dot(const Array& cumulant, const Array& task) {
  if (cumulant.size() != task.size()) {
    throw DimensionError("cumulant " + shape_string(cumulant.shape()) + " vs task " + shape_string(task.shape()));
  }
  Real r = 0;
  for (std::size_t i = 0; i < task.size(); ++i) r += cumulant[i] * task[i];
  return r;
}

std::string action_name(int action) {
  switch (action) {
    case 0: return "left";
    case 1: return "right";
    case 2: return "forward";
    case 3: return "pickup";
    default: return "invalid";
  }
}

GridWorld::GridWorld(GridConfig config) : config_(config) {
  config_.validate();
  state_.config = config_;
}

Array GridWorld::reset(const Array& task, std::uint64_t seed) {
  require_capacity(config_);
  const int cells = config_.width * config_.height;
  if (task.size() != static_cast<std::size_t>(config_.num_categories)) {
    throw DimensionError("task vector of size " + std::to_string(task.size()) + " for " +
                         std::to_string(config_.num_categories) + " categories");
  }
  task_ = task;
  rng_ = Rng(seed);

  std::vector<int> order(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) order[static_cast<std::size_t>(i)] = i;
  const int objects = config_.num_categories * config_.instances;
  for (int i = 0; i <= objects; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng_.index(static_cast<std::uint64_t>(cells - i));
    std::swap(order[static_cast<std::size_t>(i)], order[j]);
  }
  state_ = GridSnapshot{};
  state_.config = config_;
  for (int i = 0; i < objects; ++i) {
    const int c = order[static_cast<std::size_t>(i)];
    state_.objects.push_back({{c % config_.width, c / config_.width}, i / config_.instances});
  }
  const int a = order[static_cast<std::size_t>(objects)];
  state_.agent = {a % config_.width, a / config_.width};
  state_.facing = static_cast<Direction>(rng_.index(4));
  state_.step = 0;
  state_.prev_action = -1;
  done_ = false;
  return render_observation(state_);
}

Array GridWorld::reset_to(const GridSnapshot& layout, const Array& task, std::uint64_t seed) {
  if (!(layout.config.width == config_.width && layout.config.height == config_.height &&
        layout.config.num_categories == config_.num_categories && layout.config.instances == config_.instances)) {
    throw ConfigError("layout does not match the environment configuration");
  }
  require_capacity(config_);
  if (task.size() != static_cast<std::size_t>(config_.num_categories)) throw DimensionError("task vector size");
  std::vector<int> counts(static_cast<std::size_t>(config_.num_categories), 0);
  if (!layout.in_bounds(layout.agent) || layout.object_at(layout.agent) >= 0) {
    throw ContractError("agent must stand on a free in-bounds cell");
  }
  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    const auto& o = layout.objects[i];
    if (!layout.in_bounds(o.pos) || o.category < 0 || o.category >= config_.num_categories ||
        layout.object_at(o.pos) != static_cast<int>(i)) {
      throw ContractError("invalid object placement in layout");
    }
    ++counts[static_cast<std::size_t>(o.category)];
  }
  for (int c : counts)
    if (c != config_.instances) throw ContractError("layout must hold exactly K instances per category");
  if (layout.step < 0 || layout.step >= config_.horizon) throw ContractError("layout step outside the horizon");
  state_ = layout;
  state_.config = config_;
  task_ = task;
  rng_ = Rng(seed);
  done_ = false;
  return render_observation(state_);
}

StepResult GridWorld::step(int action) {
  if (done_) throw ContractError("GridWorld::step called on a finished episode; call reset first");
  if (action < 0 || action >= kNumActions) throw ContractError("invalid action " + std::to_string(action));

  StepResult result;
  result.cumulant = Array(Shape{static_cast<std::size_t>(config_.num_categories)});
  const Position front = ahead(state_.agent, state_.facing);
  switch (static_cast<Action>(action)) {
    case Action::kLeft:
      state_.facing = static_cast<Direction>((static_cast<int>(state_.facing) + 3) % 4);
      break;
    case Action::kRight:
      state_.facing = static_cast<Direction>((static_cast<int>(state_.facing) + 1) % 4);
      break;
    case Action::kForward:
      if (state_.in_bounds(front) && state_.object_at(front) < 0) state_.agent = front;
      break;
    case Action::kPickup: {
      const int idx = state_.in_bounds(front) ? state_.object_at(front) : -1;
      if (idx >= 0) {
        auto& obj = state_.objects[static_cast<std::size_t>(idx)];
        result.picked_category = obj.category;
        result.cumulant[static_cast<std::size_t>(obj.category)] = 1;
        std::vector<Position> free;
        for (int y = 0; y < config_.height; ++y)
          for (int x = 0; x < config_.width; ++x) {
            const Position p{x, y};
            if (p == state_.agent || p == front || state_.object_at(p) >= 0) continue;
            free.push_back(p);
          }
        obj.pos = free[rng_.index(free.size())];
      }
      break;
    }
  }
  result.reward = task_dot(result.cumulant, task_);
  state_.prev_action = action;
  ++state_.step;
  done_ = state_.step >= config_.horizon;
  result.done = done_;
  result.observation = render_observation(state_);
  return result;
}

}  // namespace msfa::envs
