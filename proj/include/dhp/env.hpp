#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dhp/types.hpp"

namespace dhp {

enum class EnvKind { lights_out, room_maze };

inline constexpr int kUnreachable = -1;

/// Exact, deterministic discrete transition system. Every state shares the same
/// action set. Shortest-path distances are precomputed at construction, so an
/// instance is immutable and safe to share across threads.
class Environment {
public:
    virtual ~Environment() = default;

    virtual EnvKind kind() const = 0;
    virtual std::string name() const = 0;
    virtual std::uint32_t state_count() const = 0;
    virtual int action_count() const = 0;
    virtual StateId step(StateId state, int action) const = 0;

    /// True when task (a, b) is equivalent to task (a ^ b, 0): the dynamics
    /// commute with XOR-translation of the state bits (LightsOut).
    virtual bool translation_invariant() const { return false; }

    /// The fixed goal for "solvable" task sampling, if the environment has one.
    virtual std::optional<StateId> canonical_goal() const { return std::nullopt; }

    bool valid(StateId s) const { return s.value < state_count(); }
    void require_valid(StateId s) const;

    /// Shortest action count from -> to, or kUnreachable.
    int distance(StateId from, StateId to) const;

    /// True iff distance(from, to) <= k. k = 0 reduces to equality.
    bool reachable(StateId from, StateId to, int k) const;

    /// Action that moves one step along a shortest path toward `to`; the lowest
    /// such action index. Returns nullopt when from == to or `to` is unreachable.
    std::optional<int> greedy_action(StateId from, StateId to) const;

    /// State reached after `steps` greedy moves toward `to` (stops early on arrival).
    StateId move_toward(StateId from, StateId to, int steps) const;

    /// Largest finite pairwise distance.
    int diameter() const { return diameter_; }

protected:
    /// Derived constructors call this once their dynamics are usable.
    void build_distance_table();

private:
    std::vector<int> dist_;
    int diameter_ = 0;
};

using EnvPtr = std::shared_ptr<const Environment>;

// ---------------------------------------------------------------------------
// LightsOut

/// L x L light grid packed row-major into an integer (bit i*L + j is cell (i, j)).
struct LightsOutState {
    std::uint32_t bits = 0;
    int side = 0;
};

/// Toggles cell (row, col) and its in-grid orthogonal neighbours.
/// Throws std::out_of_range for a cell outside the grid.
LightsOutState lightsout_step(LightsOutState state, int row, int col);

class LightsOut final : public Environment {
public:
    static constexpr int kMaxSide = 3;

    /// Supports 1 <= side <= 3 (distance tables are dense).
    explicit LightsOut(int side);

    EnvKind kind() const override { return EnvKind::lights_out; }
    std::string name() const override;
    std::uint32_t state_count() const override { return 1u << (side_ * side_); }
    int action_count() const override { return side_ * side_; }
    StateId step(StateId state, int action) const override;
    bool translation_invariant() const override { return true; }
    std::optional<StateId> canonical_goal() const override { return StateId{0}; }

    int side() const { return side_; }
    std::uint32_t press_mask(int action) const { return masks_.at(static_cast<std::size_t>(action)); }

private:
    int side_;
    std::vector<std::uint32_t> masks_;
};

// ---------------------------------------------------------------------------
// Room maze

enum class MazeAction : int { north = 0, south = 1, east = 2, west = 3 };

/// R x R rooms, room id = row * R + col, doors between orthogonal neighbours.
struct MazeLayout {
    int side = 0;
    std::vector<std::pair<int, int>> doors;  // normalized: first < second

    /// Throws ConfigError if a door is not between adjacent rooms or the
    /// door graph is disconnected.
    void validate() const;
    bool has_door(int a, int b) const;
};

/// Seeded randomized depth-first spanning tree plus `extra_doors` loop-closing doors.
MazeLayout generate_maze_layout(int side, int extra_doors, std::uint64_t seed);

/// Layout file format: {"R": side, "doors": [[r1, r2], ...]}.
MazeLayout load_maze_layout(const std::string& path);
void save_maze_layout(const MazeLayout& layout, const std::string& path);
std::string maze_layout_to_json(const MazeLayout& layout);
MazeLayout maze_layout_from_json(const std::string& text);

/// Moves through a door if one exists in that direction, otherwise stays put.
StateId maze_step(const MazeLayout& layout, StateId room, MazeAction action);

class RoomMaze final : public Environment {
public:
    explicit RoomMaze(MazeLayout layout);

    EnvKind kind() const override { return EnvKind::room_maze; }
    std::string name() const override;
    std::uint32_t state_count() const override { return static_cast<std::uint32_t>(layout_.side * layout_.side); }
    int action_count() const override { return 4; }
    StateId step(StateId state, int action) const override;

    const MazeLayout& layout() const { return layout_; }

private:
    MazeLayout layout_;
    std::vector<std::array<std::uint32_t, 4>> next_;
};

// ---------------------------------------------------------------------------
// Task sampling

struct TaskConstraint {
    enum class Kind { any, solvable, min_distance };

    Kind kind = Kind::any;
    /// Lower bound on the BFS distance; used by min_distance and as an extra floor for solvable.
    int distance = 0;

    static TaskConstraint any() { return {Kind::any, 0}; }
    static TaskConstraint solvable(int floor = 0) { return {Kind::solvable, floor}; }
    static TaskConstraint at_least(int d) { return {Kind::min_distance, d}; }
};

/// Uniformly random task meeting the constraint. `solvable` uses the
/// environment's canonical goal when it has one (all lights off), otherwise a
/// uniform goal. Throws ConfigError if no task satisfies the constraint.
Task sample_task(const Environment& env, Rng& rng, TaskConstraint constraint);

}  // namespace dhp
