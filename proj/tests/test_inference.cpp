#include <catch2/catch_amalgamated.hpp>

#include "adhoc/inference.hpp"

using namespace adhoc;

namespace {

Schema two_binary() {
    return build_schema({Variable{"A", {"a1", "a2"}}, Variable{"B", {"b1", "b2"}}}, "toy", "A");
}

} // namespace

TEST_CASE("conditional_marginal recovers hand-computed conditionals") {
    Schema s = two_binary();
    JointDistribution joint{s, {0.1, 0.2, 0.3, 0.4}};

    auto cond = conditional_marginal(joint, "B", {ConditionTerm{"A", {"a1"}}});
    REQUIRE(cond.support == std::vector<std::string>{"b1", "b2"});
    CHECK(cond.probs[0] == Catch::Approx(1.0 / 3.0).margin(1e-12));
    CHECK(cond.probs[1] == Catch::Approx(2.0 / 3.0).margin(1e-12));

    auto uncond = conditional_marginal(joint, "A");
    CHECK(uncond.probs[0] == Catch::Approx(0.3).margin(1e-12));

    // a condition covering every value of B is vacuous
    auto vac = conditional_marginal(joint, "A", {ConditionTerm{"B", {"b1", "b2"}}});
    CHECK(vac.probs[0] == Catch::Approx(uncond.probs[0]).margin(1e-15));
    CHECK(vac.probs[1] == Catch::Approx(uncond.probs[1]).margin(1e-15));
}

TEST_CASE("conditional_marginal rejects unknown names and empty events") {
    Schema s = two_binary();
    JointDistribution joint{s, {0.5, 0.5, 0.0, 0.0}};
    CHECK_THROWS_AS(conditional_marginal(joint, "Z"), std::invalid_argument);
    CHECK_THROWS_AS(conditional_marginal(joint, "B", {ConditionTerm{"Z", {"a1"}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(conditional_marginal(joint, "B", {ConditionTerm{"A", {"nope"}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(conditional_marginal(joint, "B", {ConditionTerm{"A", {"a2"}}}),
                    UnanswerableQueryError);
}

TEST_CASE("single-valued targets answer with a point mass") {
    Schema s = build_schema({Variable{"Year", {"2023"}}, Variable{"A", {"a1", "a2"}}}, "", "A");
    JointDistribution joint{s, {0.4, 0.6}};
    auto d = conditional_marginal(joint, "Year");
    REQUIRE(d.support == std::vector<std::string>{"2023"});
    CHECK(d.probs[0] == 1.0);
}

TEST_CASE("tvd identities") {
    Distribution p{{"x", "y"}, {1.0, 0.0}};
    Distribution q{{"x", "y"}, {0.0, 1.0}};
    Distribution r{{"x", "y"}, {0.6, 0.4}};
    Distribution t{{"x", "y"}, {0.4, 0.6}};
    CHECK(tvd(p, p) == 0.0);
    CHECK(tvd(p, q) == Catch::Approx(1.0).margin(1e-15));
    CHECK(tvd(r, t) == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("tvd aligns supports by label, any order") {
    Distribution a{{"Yes", "No"}, {0.7, 0.3}};
    Distribution b{{" no ", "YES"}, {0.3, 0.7}};
    CHECK(tvd(a, b) == Catch::Approx(0.0).margin(1e-15));
    Distribution c{{"Yes", "Maybe"}, {0.7, 0.3}};
    CHECK_THROWS_AS(tvd(a, c), std::invalid_argument);
}

TEST_CASE("answer_query backs off unknown condition variables") {
    Schema s = two_binary();
    FactorGraph g{s, {}, {}};
    std::vector<double> theta(4, 0.0);

    Query q{"B", {ConditionTerm{"A", {"a1"}}, ConditionTerm{"Weather", {"rainy"}}}, "text"};
    auto ans = answer_query(g, theta, q);
    CHECK(ans.backed_off == std::vector<std::string>{"Weather"});
    CHECK(ans.distribution.probs[0] == Catch::Approx(0.5).margin(1e-12));

    // known variable, unknown value: hard error rather than a silent guess
    Query bad{"B", {ConditionTerm{"A", {"a9"}}}, ""};
    CHECK_THROWS_AS(answer_query(g, theta, bad), std::invalid_argument);
}

TEST_CASE("answer_query uses the supplied weights") {
    Schema s = build_schema({Variable{"A", {"x", "y"}}}, "", "A");
    FactorGraph g{s, {}, {}};
    auto ans = answer_query(g, {0.0, std::log(3.0)}, Query{"A", {}, ""});
    CHECK(ans.distribution.probs[1] == Catch::Approx(0.75).margin(1e-12));
}
