#include "doctest.h"

#include "dhp/env.hpp"
#include "dhp/harness.hpp"
#include "dhp/oracle.hpp"

using namespace dhp;

namespace {

std::uint32_t bits(std::initializer_list<std::pair<int, int>> cells, int side) {
    std::uint32_t b = 0;
    for (auto [r, c] : cells) b |= 1u << (r * side + c);
    return b;
}

}  // namespace

TEST_CASE("lightsout press toggles the cell and its neighbours") {
    const auto s = lightsout_step({0, 2}, 0, 0);
    CHECK(s.bits == bits({{0, 0}, {0, 1}, {1, 0}}, 2));

    const auto center = lightsout_step({0, 3}, 1, 1);
    CHECK(center.bits == bits({{1, 1}, {0, 1}, {2, 1}, {1, 0}, {1, 2}}, 3));

    CHECK_THROWS_AS(lightsout_step({0, 2}, 2, 0), std::out_of_range);
    CHECK_THROWS_AS(lightsout_step({0, 2}, 0, -1), std::out_of_range);
}

TEST_CASE("lightsout presses are involutions and commute") {
    const LightsOut env(3);
    for (std::uint32_t s = 0; s < env.state_count(); ++s) {
        for (int a = 0; a < env.action_count(); ++a) {
            CHECK(env.step(env.step(StateId{s}, a), a) == StateId{s});
            for (int b = 0; b < env.action_count(); ++b) {
                CHECK(env.step(env.step(StateId{s}, a), b) == env.step(env.step(StateId{s}, b), a));
            }
        }
    }
}

TEST_CASE("every lightsout board up to 3x3 can be switched off") {
    for (int side : {2, 3}) {
        const LightsOut env(side);
        const auto row = oracle::bfs_row(env, StateId{0});
        for (std::uint32_t s = 0; s < env.state_count(); ++s) CHECK(row[s] >= 0);
    }
}

TEST_CASE("distance table agrees with bfs and is symmetric for lightsout") {
    const LightsOut env(2);
    for (std::uint32_t a = 0; a < env.state_count(); ++a) {
        const auto row = oracle::bfs_row(env, StateId{a});
        for (std::uint32_t b = 0; b < env.state_count(); ++b) {
            CHECK(env.distance(StateId{a}, StateId{b}) == row[b]);
            CHECK(env.distance(StateId{a}, StateId{b}) == env.distance(StateId{b}, StateId{a}));
        }
    }
}

TEST_CASE("reachable") {
    const LightsOut env(2);
    const StateId off{0};
    const StateId two = env.step(env.step(off, 0), 3);
    CHECK(oracle::bfs_distance(env, off, two) == 2);
    CHECK(env.reachable(off, off, 0));
    CHECK_FALSE(env.reachable(off, env.step(off, 0), 0));
    CHECK(env.reachable(off, env.step(off, 0), 1));
    CHECK_FALSE(env.reachable(off, two, 1));
    CHECK(env.reachable(off, two, 2));

    const RoomMaze maze(default_maze_layout(5));
    const auto& layout = maze.layout();
    for (auto [a, b] : layout.doors) CHECK(maze.reachable(StateId{static_cast<std::uint32_t>(a)}, StateId{static_cast<std::uint32_t>(b)}, 1));
}

TEST_CASE("maze walls are self-loops and doors are symmetric") {
    const RoomMaze maze(default_maze_layout(5));
    const auto& layout = maze.layout();
    const int side = layout.side;
    const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, 1, -1};
    for (int room = 0; room < side * side; ++room) {
        for (int a = 0; a < 4; ++a) {
            const int r = room / side + dr[a], c = room % side + dc[a];
            const StateId next = maze.step(StateId{static_cast<std::uint32_t>(room)}, a);
            const bool inside = r >= 0 && r < side && c >= 0 && c < side;
            if (inside && layout.has_door(room, r * side + c)) {
                CHECK(next.value == static_cast<std::uint32_t>(r * side + c));
                CHECK(maze.step(next, a ^ 1).value == static_cast<std::uint32_t>(room));
            } else {
                CHECK(next.value == static_cast<std::uint32_t>(room));
            }
        }
    }
}

TEST_CASE("checked-in layouts are the built-in ones") {
    for (int side : {5, 7}) {
        const auto file = load_maze_layout(std::string(DHP_SOURCE_DIR) + "/data/layouts/maze" + std::to_string(side) + ".json");
        const auto built = default_maze_layout(side);
        CHECK(file.side == side);
        CHECK(file.doors == built.doors);
    }
    // room 12 is the centre of the 5x5 layout: its only door leads south to 17
    const RoomMaze maze(load_maze_layout(std::string(DHP_SOURCE_DIR) + "/data/layouts/maze5.json"));
    CHECK(maze.step(StateId{12}, static_cast<int>(MazeAction::south)) == StateId{17});
    CHECK(maze.step(StateId{12}, static_cast<int>(MazeAction::north)) == StateId{12});
}

TEST_CASE("layout validation") {
    MazeLayout bad{3, {{0, 4}}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    MazeLayout split{2, {{0, 1}}};
    CHECK_THROWS_AS(split.validate(), ConfigError);
    const auto round_trip = maze_layout_from_json(maze_layout_to_json(default_maze_layout(5)));
    CHECK(round_trip.doors == default_maze_layout(5).doors);
}

TEST_CASE("generated layouts are connected and seeded") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto layout = generate_maze_layout(6, 5, seed);
        CHECK_NOTHROW(layout.validate());
        CHECK(layout.doors.size() == 35 + 5);
        CHECK(generate_maze_layout(6, 5, seed).doors == layout.doors);
    }
}

TEST_CASE("task sampling") {
    Rng rng(3);
    const LightsOut lo(3);
    for (int i = 0; i < 200; ++i) {
        const auto t = sample_task(lo, rng, TaskConstraint::solvable());
        CHECK(t.goal == StateId{0});
        CHECK(lo.distance(t.init, t.goal) >= 0);
    }
    const RoomMaze maze(default_maze_layout(5));
    for (int i = 0; i < 200; ++i) {
        const auto t = sample_task(maze, rng, TaskConstraint::at_least(4));
        CHECK(*oracle::bfs_distance(maze, t.init, t.goal) >= 4);
        const auto any = sample_task(maze, rng, TaskConstraint::any());
        CHECK(maze.distance(any.init, any.goal) >= 0);
    }
    CHECK_THROWS_AS(sample_task(maze, rng, TaskConstraint::at_least(maze.diameter() + 1)), ConfigError);

    // a rare constraint is still met exactly: only the diameter pairs qualify
    for (int i = 0; i < 100; ++i) {
        const auto t = sample_task(maze, rng, TaskConstraint::at_least(maze.diameter()));
        CHECK(maze.distance(t.init, t.goal) == maze.diameter());
    }
}

TEST_CASE("greedy action walks a shortest path") {
    const RoomMaze maze(default_maze_layout(7));
    for (std::uint32_t a = 0; a < maze.state_count(); a += 3) {
        for (std::uint32_t b = 0; b < maze.state_count(); b += 5) {
            StateId s{a};
            int steps = 0;
            while (s != StateId{b}) {
                s = maze.step(s, *maze.greedy_action(s, StateId{b}));
                ++steps;
            }
            CHECK(steps == maze.distance(StateId{a}, StateId{b}));
        }
    }
    CHECK_FALSE(maze.greedy_action(StateId{0}, StateId{0}).has_value());
}

TEST_CASE("invalid states are rejected") {
    const LightsOut env(2);
    CHECK_THROWS_AS(env.require_valid(StateId{16}), InvalidState);
    CHECK_THROWS_AS(oracle::bfs_distance(env, StateId{0}, StateId{99}), InvalidState);
}
