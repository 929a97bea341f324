#include "dhp/env.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace dhp {

namespace {

constexpr std::uint32_t kDenseLimit = 4096;

}  // namespace

void Environment::require_valid(StateId s) const {
    if (!valid(s)) {
        throw InvalidState(name() + ": state " + std::to_string(s.value) + " outside state space of size " +
                           std::to_string(state_count()));
    }
}

void Environment::build_distance_table() {
    const std::uint32_t n = state_count();
    if (n > kDenseLimit) {
        throw ConfigError(name() + ": state space too large for dense distance tables");
    }
    dist_.assign(static_cast<std::size_t>(n) * n, kUnreachable);
    std::vector<std::uint32_t> queue(n);
    for (std::uint32_t src = 0; src < n; ++src) {
        int* row = dist_.data() + static_cast<std::size_t>(src) * n;
        std::size_t head = 0, tail = 0;
        row[src] = 0;
        queue[tail++] = src;
        while (head < tail) {
            const std::uint32_t u = queue[head++];
            for (int a = 0; a < action_count(); ++a) {
                const std::uint32_t v = step(StateId{u}, a).value;
                if (row[v] == kUnreachable) {
                    row[v] = row[u] + 1;
                    queue[tail++] = v;
                }
            }
        }
    }
    diameter_ = *std::max_element(dist_.begin(), dist_.end());
}

int Environment::distance(StateId from, StateId to) const {
    require_valid(from);
    require_valid(to);
    return dist_[static_cast<std::size_t>(from.value) * state_count() + to.value];
}

bool Environment::reachable(StateId from, StateId to, int k) const {
    const int d = distance(from, to);
    return d != kUnreachable && d <= k;
}

std::optional<int> Environment::greedy_action(StateId from, StateId to) const {
    const int d = distance(from, to);
    if (d <= 0) return std::nullopt;
    for (int a = 0; a < action_count(); ++a) {
        if (distance(step(from, a), to) == d - 1) return a;
    }
    return std::nullopt;
}

StateId Environment::move_toward(StateId from, StateId to, int steps) const {
    for (int i = 0; i < steps; ++i) {
        const auto a = greedy_action(from, to);
        if (!a) break;
        from = step(from, *a);
    }
    return from;
}

// ---------------------------------------------------------------------------

LightsOutState lightsout_step(LightsOutState state, int row, int col) {
    const int L = state.side;
    if (row < 0 || row >= L || col < 0 || col >= L) {
        throw std::out_of_range("lightsout_step: cell (" + std::to_string(row) + "," + std::to_string(col) +
                                ") outside " + std::to_string(L) + "x" + std::to_string(L) + " grid");
    }
    auto bit = [L](int r, int c) { return 1u << (r * L + c); };
    std::uint32_t mask = bit(row, col);
    if (row > 0) mask |= bit(row - 1, col);
    if (row + 1 < L) mask |= bit(row + 1, col);
    if (col > 0) mask |= bit(row, col - 1);
    if (col + 1 < L) mask |= bit(row, col + 1);
    state.bits ^= mask;
    return state;
}

LightsOut::LightsOut(int side) : side_(side) {
    if (side < 1 || side > kMaxSide) {
        throw ConfigError("LightsOut side must be in [1, " + std::to_string(kMaxSide) + "], got " +
                          std::to_string(side));
    }
    for (int a = 0; a < side * side; ++a) {
        masks_.push_back(lightsout_step(LightsOutState{0, side}, a / side, a % side).bits);
    }
    build_distance_table();
}

std::string LightsOut::name() const { return "lightsout" + std::to_string(side_); }

StateId LightsOut::step(StateId state, int action) const {
    require_valid(state);
    if (action < 0 || action >= action_count()) {
        throw std::out_of_range("LightsOut::step: action " + std::to_string(action) + " out of range");
    }
    return StateId{state.value ^ masks_[static_cast<std::size_t>(action)]};
}

// ---------------------------------------------------------------------------

namespace {

bool adjacent(int side, int a, int b) {
    const int ra = a / side, ca = a % side, rb = b / side, cb = b % side;
    return std::abs(ra - rb) + std::abs(ca - cb) == 1;
}

}  // namespace

bool MazeLayout::has_door(int a, int b) const {
    const auto key = std::minmax(a, b);
    return std::find(doors.begin(), doors.end(), std::pair<int, int>{key.first, key.second}) != doors.end();
}

void MazeLayout::validate() const {
    if (side < 1) throw ConfigError("maze side must be >= 1");
    const int n = side * side;
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& [a, b] : doors) {
        if (a < 0 || b < 0 || a >= n || b >= n || !adjacent(side, a, b)) {
            throw ConfigError("maze door [" + std::to_string(a) + "," + std::to_string(b) +
                              "] does not join orthogonally adjacent rooms");
        }
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int visited = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : adj[static_cast<std::size_t>(u)]) {
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = 1;
                ++visited;
                stack.push_back(v);
            }
        }
    }
    if (visited != n) throw ConfigError("maze layout is not connected");
}

MazeLayout generate_maze_layout(int side, int extra_doors, std::uint64_t seed) {
    if (side < 1) throw ConfigError("maze side must be >= 1");
    Rng rng(seed);
    const int n = side * side;
    auto neighbours = [side](int r) {
        std::vector<int> out;
        const int i = r / side, j = r % side;
        if (i > 0) out.push_back(r - side);
        if (i + 1 < side) out.push_back(r + side);
        if (j + 1 < side) out.push_back(r + 1);
        if (j > 0) out.push_back(r - 1);
        return out;
    };
    MazeLayout layout{side, {}};
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
        const int r = stack.back();
        std::vector<int> fresh;
        for (int x : neighbours(r)) {
            if (!seen[static_cast<std::size_t>(x)]) fresh.push_back(x);
        }
        if (fresh.empty()) {
            stack.pop_back();
            continue;
        }
        const int x = fresh[uniform_index(rng, static_cast<std::uint32_t>(fresh.size()))];
        layout.doors.emplace_back(std::min(r, x), std::max(r, x));
        seen[static_cast<std::size_t>(x)] = 1;
        stack.push_back(x);
    }
    std::vector<std::pair<int, int>> walls;
    for (int r = 0; r < n; ++r) {
        for (int x : neighbours(r)) {
            if (r < x && !layout.has_door(r, x)) walls.emplace_back(r, x);
        }
    }
    std::shuffle(walls.begin(), walls.end(), rng);
    for (int i = 0; i < extra_doors && i < static_cast<int>(walls.size()); ++i) {
        layout.doors.push_back(walls[static_cast<std::size_t>(i)]);
    }
    std::sort(layout.doors.begin(), layout.doors.end());
    return layout;
}

std::string maze_layout_to_json(const MazeLayout& layout) {
    nlohmann::json j;
    j["R"] = layout.side;
    j["doors"] = nlohmann::json::array();
    for (const auto& [a, b] : layout.doors) j["doors"].push_back({a, b});
    return j.dump();
}

MazeLayout maze_layout_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MazeLayout layout;
    layout.side = j.at("R").get<int>();
    for (const auto& d : j.at("doors")) {
        const int a = d.at(0).get<int>(), b = d.at(1).get<int>();
        layout.doors.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(layout.doors.begin(), layout.doors.end());
    layout.validate();
    return layout;
}

MazeLayout load_maze_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open maze layout file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return maze_layout_from_json(ss.str());
}

void save_maze_layout(const MazeLayout& layout, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write maze layout file: " + path);
    out << maze_layout_to_json(layout) << "\n";
}

StateId maze_step(const MazeLayout& layout, StateId room, MazeAction action) {
    const int side = layout.side;
    const int r = static_cast<int>(room.value);
    if (r < 0 || r >= side * side) throw InvalidState("maze_step: room outside layout");
    const int i = r / side, j = r % side;
    int target = -1;
    switch (action) {
        case MazeAction::north: target = i > 0 ? r - side : -1; break;
        case MazeAction::south: target = i + 1 < side ? r + side : -1; break;
        case MazeAction::east: target = j + 1 < side ? r + 1 : -1; break;
        case MazeAction::west: target = j > 0 ? r - 1 : -1; break;
    }
    if (target < 0 || !layout.has_door(r, target)) return room;
    return StateId{static_cast<std::uint32_t>(target)};
}

RoomMaze::RoomMaze(MazeLayout layout) : layout_(std::move(layout)) {
    layout_.validate();
    next_.resize(state_count());
    for (std::uint32_t r = 0; r < state_count(); ++r) {
        for (int a = 0; a < 4; ++a) {
            next_[r][static_cast<std::size_t>(a)] = maze_step(layout_, StateId{r}, static_cast<MazeAction>(a)).value;
        }
    }
    build_distance_table();
}

std::string RoomMaze::name() const { return "maze" + std::to_string(layout_.side); }

StateId RoomMaze::step(StateId state, int action) const {
    require_valid(state);
    if (action < 0 || action >= 4) throw std::out_of_range("RoomMaze::step: action out of range");
    return StateId{next_[state.value][static_cast<std::size_t>(action)]};
}

// ---------------------------------------------------------------------------

Task sample_task(const Environment& env, Rng& rng, TaskConstraint constraint) {
    const std::uint32_t n = env.state_count();
    const int floor = std::max(0, constraint.distance);

    if (constraint.kind == TaskConstraint::Kind::any) {
        return Task{StateId{uniform_index(rng, n)}, StateId{uniform_index(rng, n)}};
    }

    std::optional<StateId> fixed_goal;
    if (constraint.kind == TaskConstraint::Kind::solvable) fixed_goal = env.canonical_goal();

    auto ok = [&](StateId a, StateId b) {
        const int d = env.distance(a, b);
        return d != kUnreachable && d >= floor;
    };

    // Rejection sampling is exactly uniform over the accepted set; fall back to
    // enumeration only to tell "rare" from "empty".
    for (int attempt = 0; attempt < 4096; ++attempt) {
        const StateId goal = fixed_goal ? *fixed_goal : StateId{uniform_index(rng, n)};
        const StateId init{uniform_index(rng, n)};
        if (ok(init, goal)) return Task{init, goal};
    }
    std::vector<Task> pool;
    for (std::uint32_t g = 0; g < n; ++g) {
        if (fixed_goal && g != fixed_goal->value) continue;
        for (std::uint32_t s = 0; s < n; ++s) {
            if (ok(StateId{s}, StateId{g})) pool.push_back(Task{StateId{s}, StateId{g}});
        }
    }
    if (pool.empty()) {
        throw ConfigError("sample_task: no task in " + env.name() + " satisfies the constraint (distance >= " +
                          std::to_string(floor) + ")");
    }
    return pool[uniform_index(rng, static_cast<std::uint32_t>(pool.size()))];
}

}  // namespace dhp
