#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "helpers.hpp"
#include "perfodyn/errors.hpp"
#include "perfodyn/graph.hpp"

using namespace perfodyn;

namespace {

std::string write_temp(const std::string& contents) {
    static int counter = 0;
    std::string path = "test_edges_" + std::to_string(counter++) + ".txt";
    std::ofstream out(path);
    out << contents;
    return path;
}

}  // namespace

TEST_CASE("edge list: P3 path") {
    const std::string path = write_temp("0 1\n1 2\n");
    const Graph g = load_edge_list(path);
    CHECK(g.node_count() == 3);
    CHECK(g.degrees() == std::vector<int>{1, 2, 1});
    CHECK(g.edge_count() == 2);
    std::remove(path.c_str());
}

TEST_CASE("edge list: duplicates collapse, comments skipped, labels remapped") {
    const std::string path = write_temp("a b\nb a\n# comment\nb c\n");
    const Graph g = load_edge_list(path);
    CHECK(g.node_count() == 3);
    CHECK(g.edge_count() == 2);
    CHECK(g.labels() == std::vector<std::string>{"a", "b", "c"});
    CHECK(g.degrees() == std::vector<int>{1, 2, 1});
    std::remove(path.c_str());
}

TEST_CASE("edge list: self-loop and malformed lines rejected with line numbers") {
    const std::string loop_path = write_temp("0 0\n");
    CHECK_THROWS_WITH_AS(load_edge_list(loop_path), doctest::Contains("line 1"), InvalidInputError);
    std::remove(loop_path.c_str());

    const std::string bad_path = write_temp("0 1\n2\n");
    CHECK_THROWS_WITH_AS(load_edge_list(bad_path), doctest::Contains("line 2"), InvalidInputError);
    std::remove(bad_path.c_str());

    const std::string empty_path = write_temp("# nothing\n");
    CHECK_THROWS_AS(load_edge_list(empty_path), InvalidInputError);
    std::remove(empty_path.c_str());
}

TEST_CASE("largest component: deterministic tie-breaking and idempotence") {
    // Two disjoint triangles plus a pair; the first triangle wins the tie.
    const Graph g = Graph::from_edges(
        8, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}, {6, 7}});
    const Graph lcc = largest_connected_component(g);
    CHECK(lcc.node_count() == 3);
    CHECK(lcc.labels() == std::vector<std::string>{"0", "1", "2"});

    const Graph again = largest_connected_component(lcc);
    CHECK(again.node_count() == 3);
    CHECK(again.edges() == lcc.edges());

    // P3 against a lone pair.
    const Graph h = Graph::from_edges(5, {{0, 1}, {1, 2}, {3, 4}});
    CHECK(largest_connected_component(h).node_count() == 3);
}

TEST_CASE("influence matrix rows") {
    const InfluenceMatrix w2 = testutil::path2();
    CHECK(w2.matrix()(0, 1) == 1.0);
    CHECK(w2.matrix()(1, 0) == 1.0);
    CHECK(w2.matrix()(0, 0) == 0.0);

    const InfluenceMatrix w3 = testutil::triangle();
    CHECK(w3.matrix()(0, 1) == 0.5);
    CHECK(w3.matrix()(0, 0) == 0.0);

    const InfluenceMatrix p3 = testutil::path3();
    CHECK(p3.matrix()(1, 0) == 0.5);
    CHECK(p3.matrix()(1, 2) == 0.5);
    CHECK(p3.matrix()(1, 1) == 0.0);
}

TEST_CASE("properties: P2, T3, P3") {
    const GraphProperties p2 = check_properties(testutil::path2().graph());
    CHECK(p2.connected);
    CHECK(p2.regular);
    CHECK(p2.bipartite);
    CHECK_FALSE(p2.aperiodic);

    const GraphProperties t3 = check_properties(testutil::triangle().graph());
    CHECK(t3.connected);
    CHECK(t3.regular);
    CHECK(t3.aperiodic);

    const GraphProperties p3 = check_properties(testutil::path3().graph());
    CHECK_FALSE(p3.regular);
}

TEST_CASE("even cycles are periodic, odd cycles are not") {
    for (int n = 3; n <= 12; ++n) {
        const GraphProperties props = check_properties(testutil::cycle(n).graph());
        CHECK(props.connected);
        CHECK(props.aperiodic == (n % 2 == 1));
    }
}

TEST_CASE("row stochasticity and symmetry on random graphs") {
    Rng rng(123);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(40));
        const InfluenceMatrix w = testutil::random_connected(n, n / 2, rng);
        const Eigen::MatrixXd& m = w.matrix();
        CHECK((m.rowwise().sum() - Eigen::VectorXd::Ones(n)).lpNorm<Eigen::Infinity>() < 1e-12);
        const Eigen::MatrixXd a = w.graph().adjacency_matrix();
        CHECK(a == a.transpose());
        // Sparse apply agrees with the dense product.
        Eigen::VectorXd x = testutil::random_opinions(n, rng);
        CHECK((w.apply(x) - m * x).lpNorm<Eigen::Infinity>() < 1e-14);
    }
}

TEST_CASE("relabeling equivariance: permuting labels permutes W") {
    Rng rng(77);
    const int n = 9;
    const InfluenceMatrix w = testutil::random_connected(n, 6, rng);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<std::size_t>(i)], perm[rng.uniform_index(static_cast<std::size_t>(i) + 1)]);

    std::vector<std::pair<int, int>> permuted;
    for (const auto& [a, b] : w.graph().edges())
        permuted.emplace_back(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
    const InfluenceMatrix wp = testutil::make_w(n, permuted);

    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) p(perm[static_cast<std::size_t>(i)], i) = 1.0;
    CHECK((wp.matrix() - p * w.matrix() * p.transpose()).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("connected subgraph sampling") {
    const InfluenceMatrix t3 = testutil::triangle();

    SUBCASE("size n returns the graph itself") {
        const Graph s = sample_connected_subgraph(t3.graph(), 3, 5);
        CHECK(s.node_count() == 3);
        CHECK(s.edge_count() == 3);
    }
    SUBCASE("size 2 of a triangle is a pair") {
        const Graph s = sample_connected_subgraph(t3.graph(), 2, 9);
        CHECK(s.node_count() == 2);
        CHECK(s.edge_count() == 1);
    }
    SUBCASE("same seed, same node set") {
        Rng rng(4);
        const InfluenceMatrix w = testutil::random_connected(30, 20, rng);
        const Graph a = sample_connected_subgraph(w.graph(), 12, 42);
        const Graph b = sample_connected_subgraph(w.graph(), 12, 42);
        CHECK(a.labels() == b.labels());
        CHECK(a.edges() == b.edges());
        CHECK(check_properties(a).connected);
    }
    SUBCASE("size bounds") {
        CHECK_THROWS_AS(sample_connected_subgraph(t3.graph(), 0, 1), InvalidInputError);
        CHECK_THROWS_AS(sample_connected_subgraph(t3.graph(), 4, 1), InvalidInputError);
    }
}

TEST_CASE("isolated nodes: reject by default, drop on request") {
    CHECK_THROWS_AS(Graph::from_edges(3, {{0, 1}}), InvalidInputError);
    const Graph g = Graph::from_edges(3, {{0, 1}}, IsolatedNodePolicy::Drop);
    CHECK(g.node_count() == 2);
    CHECK(g.labels() == std::vector<std::string>{"0", "1"});
}

TEST_CASE("label map round trip") {
    const std::string edges_path = write_temp("alice bob\nbob carol\n");
    const Graph g = load_edge_list(edges_path);
    const std::string map_path = "test_labels_out.csv";
    write_label_map_csv(g, map_path);
    std::ifstream in(map_path);
    std::string header, row;
    std::getline(in, header);
    CHECK(header == "external_label,index");
    std::getline(in, row);
    CHECK(row == "alice,0");
    std::remove(edges_path.c_str());
    std::remove(map_path.c_str());
}

TEST_CASE("drop policy records which labels were discarded") {
    const Graph g = Graph::from_edges(4, {{0, 2}}, IsolatedNodePolicy::Drop,
                                      {"a", "lonely", "c", "alone"});
    CHECK(g.node_count() == 2);
    CHECK(g.dropped_labels() == std::vector<std::string>{"lonely", "alone"});
}
