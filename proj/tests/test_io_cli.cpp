#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "corpus.hpp"
#include "popdyn/cli.hpp"

using namespace popdyn;
using namespace popdyn::testing;

namespace {

std::string fixture(const std::string& name) { return std::string(POPDYN_PROTOCOLS_DIR) + "/" + name; }

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<ParseIssue> issues_of(const std::string& text) {
  try {
    parse_protocol_unchecked(text);
  } catch (const ParseError& e) {
    return e.issues();
  }
  return {};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) v.push_back(l);
  return v;
}

Vector csv_numbers(const std::string& line) {
  Vector v;
  std::istringstream is(line);
  for (std::string tok; std::getline(is, tok, ',');) {
    if (!tok.empty() && tok.back() == '\n') tok.pop_back();
    double d;
    if (parse_number(tok, d)) v.push_back(d);
  }
  return v;
}

}  // namespace

TEST(Parse, WorkedExampleFile) {
  std::ifstream in(fixture("worked.pp"));
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(parse_protocol_file(ss.str()), worked_example());
}

TEST(Parse, LeftStatesMustDiffer) {
  const auto issues = issues_of("kind ppp\nstates a b\nrule a a -> a b\n");
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].line, 3u);
  EXPECT_EQ(issues[0].message, "left states must differ");
}

TEST(Parse, ImmunityIsSymmetricByDeclaration) {
  const auto spec = parse_protocol_file("kind lvp\nstates a b\ngamma 3\ndelta 1\nimmunity a b 2\n");
  const auto& a = spec.as<LvpKind>().immunity;
  EXPECT_EQ(a[0][1], 2);
  EXPECT_EQ(a[1][0], 2);
  EXPECT_EQ(a[0][0], 0);
  EXPECT_FALSE(issues_of("kind lvp\nstates a b\ngamma 3\ndelta 1\nimmunity a b 2\nimmunity b a 2\n").empty());
}

TEST(Parse, DirectiveOfAnotherKind) {
  const auto issues = issues_of("kind mpp\nstates a b\nrule a b -> b a\nrate a 1\nrate b 1\n");
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].line, 3u);
  EXPECT_EQ(issues[0].message, "`rule` is not allowed in a mpp file");
}

TEST(Parse, CollectsEveryIssueWithLineNumbers) {
  const auto issues = issues_of(
      "kind mpp\n"
      "states a b\n"
      "rate a one\n"
      "rate c 1\n"
      "switch a b\n"
      "switch a b 1\n"
      "switch a b 1\n"
      "frobnicate\n");
  std::vector<std::size_t> got;
  for (const auto& i : issues) got.push_back(i.line);
  EXPECT_EQ(got, (std::vector<std::size_t>{3, 4, 5, 7, 8}));
}

TEST(Parse, MissingDeclarations) {
  EXPECT_FALSE(issues_of("states a b\n").empty());
  EXPECT_FALSE(issues_of("kind ppp\n").empty());
  const auto issues = issues_of("kind mpp\nstates a b\nrate a 1\n");
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].message, "missing rate for state 'b'");
}

TEST(Parse, CommentsAndBlankLinesAreIgnored) {
  const auto spec = parse_protocol_file("# header\n\nkind ppp   # trailing\nstates a b c\n\nrule a b -> c b # r\n");
  EXPECT_EQ(spec.as<PppKind>().rules.size(), 1u);
}

TEST(Parse, ValidationFailuresBecomeParseErrors) {
  EXPECT_THROW(parse_protocol_file("kind mpp\nstates a b\nrate a 1\nrate b 1\nswitch a b 0.5\nswitch b a 1\n"),
               ParseError);
  EXPECT_THROW(parse_protocol_file("kind ppp\nstates a b c\nrule a b -> c b\nrule a b -> b c\n"), ParseError);
  EXPECT_THROW(parse_protocol_file("kind lvp\nstates a b\ngamma 0\ndelta 1\nimmunity a a 1\n"), ParseError);
}

TEST(Parse, SerializeRoundTripsTheCorpus) {
  for (const auto& [name, spec] : corpus()) {
    const std::string text = serialize_protocol(spec);
    EXPECT_EQ(parse_protocol_unchecked(text), spec) << name << '\n' << text;
    EXPECT_EQ(serialize_protocol(parse_protocol_unchecked(text)), text) << name;
  }
}

TEST(Cli, Validate) {
  const auto r = run({"validate", fixture("worked.pp")});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "valid: ppp, 3 states, 3 rules\n");
}

TEST(Cli, ValidateReportsViolations) {
  const std::string path = ::testing::TempDir() + "/bad.pp";
  std::ofstream(path) << "kind mpp\nstates a b\nrate a 1\nrate b 1\nswitch a b 0.5\nswitch b a 1\n";
  const auto r = run({"validate", path});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(r.out.empty());
  EXPECT_FALSE(r.err.empty());
  std::remove(path.c_str());
}

TEST(Cli, StationaryOfUnequalSwap) {
  const auto r = run({"stationary", fixture("swap12.pp")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Vector x = csv_numbers(lines(r.out).at(0));
  ASSERT_EQ(x.size(), 2u);
  EXPECT_NEAR(x[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(x[1], 1.0 / 3.0, 1e-12);
}

TEST(Cli, KindRefusals) {
  for (const auto& cmd : std::vector<std::vector<std::string>>{
           {"stationary", fixture("worked.pp")},
           {"lyapunov", fixture("swap.pp"), "--star", "0.5,0.5"},
           {"lv-map", fixture("worked.pp")},
           {"reduce", fixture("swap.pp")}}) {
    const auto r = run(cmd);
    EXPECT_EQ(r.code, 1) << cmd[0];
    EXPECT_NE(r.err.find("not applicable"), std::string::npos) << r.err;
  }
}

TEST(Cli, StabilityListsVertices) {
  const auto r = run({"stability", fixture("worked.pp")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  EXPECT_EQ(ls.at(0), "q1,q2,q3,residual,verdict,re_1,im_1,re_2,im_2");
  for (const std::string vertex : {"1,0,0,", "0,1,0,", "0,0,1,"}) {
    bool found = false;
    for (const auto& l : ls) found = found || l.rfind(vertex, 0) == 0;
    EXPECT_TRUE(found) << vertex;
  }
}

TEST(Cli, RhsAtBarycenter) {
  const auto r = run({"rhs", fixture("worked.pp"), "--at", "0.25,0.25,0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Vector v = csv_numbers(r.out);
  const Vector expected = worked_example_expanded_rhs(Vector{0.25, 0.25, 0.5});
  ASSERT_EQ(v.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(v[i], expected[i], 1e-15);
}

TEST(Cli, RejectsPointsOffTheSimplex) {
  EXPECT_EQ(run({"rhs", fixture("worked.pp"), "--at", "0.5,0.5,0.5"}).code, 1);
  EXPECT_EQ(run({"rhs", fixture("worked.pp"), "--at", "0.5,0.5"}).code, 1);
  EXPECT_EQ(run({"rhs", fixture("worked.pp"), "--at", "0.5,x,0.5"}).code, 1);
}

TEST(Cli, IntegrateSwap) {
  const auto r = run({"integrate", fixture("swap.pp"), "--x0", "1,0", "--t", "1", "--dt", "0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 4u);
  EXPECT_EQ(ls[0], "t,a,b");
  const Vector last = csv_numbers(ls[3]);
  EXPECT_EQ(last[0], 1.0);
  EXPECT_NEAR(last[1], 0.5 + 0.5 * std::exp(-2.0), 1e-6);
}

TEST(Cli, SimulateIsByteIdenticalPerSeed) {
  const std::vector<std::string> cmd{"simulate", fixture("epidemic.pp"), "--n", "500", "--t", "2",
                                     "--seed", "7", "--x0", "0.5,0.3,0.2"};
  const auto a = run(cmd), b = run(cmd);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(lines(a.out).at(0), "# n=500,seed=7");
  EXPECT_EQ(lines(a.out).size(), 103u);
  EXPECT_EQ(run({"simulate", fixture("swap.pp"), "--n", "1", "--t", "1", "--seed", "1"}).code, 1);
}

TEST(Cli, AnalysisOutputIsDeterministic) {
  for (const auto& cmd : std::vector<std::vector<std::string>>{
           {"fixed-points", fixture("epidemic.pp")},
           {"stability", fixture("viral_stable.pp")},
           {"lyapunov", fixture("viral_stable.pp"), "--star", "0.3333333333333333,0.3333333333333333,0.3333333333333334"}}) {
    const auto a = run(cmd), b = run(cmd);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
  }
}

TEST(Cli, LyapunovVerdicts) {
  const std::string third = "0.3333333333333333,0.3333333333333333,0.3333333333333334";
  const auto ok = run({"lyapunov", fixture("viral_stable.pp"), "--star", third});
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(lines(ok.out).at(0), "verdict: certified");
  const auto bad = run({"lyapunov", fixture("viral_unstable.pp"), "--star", third, "--seed", "3"});
  ASSERT_EQ(bad.code, 0) << bad.err;
  EXPECT_EQ(lines(bad.out).at(0), "verdict: refuted");
  EXPECT_EQ(run({"lyapunov", fixture("viral_stable.pp"), "--star", "0.5,0.25,0.25"}).code, 1);
}

TEST(Cli, EntropyWithoutProtocol) {
  const auto r = run({"entropy", "--star", "0.5,0.5", "--at", "0.9,0.1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(csv_numbers(r.out).at(0), 0.51083, 1e-5);
  EXPECT_EQ(run({"entropy", "--star", "0.5,0.5", "--at", "1,0"}).out, "inf\n");
}

TEST(Cli, LotkaVolterraMap) {
  const auto r = run({"lv-map", fixture("viral_unstable.pp"), "--pivot", "a"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  EXPECT_EQ(ls.at(1), "state,r,B_b,B_c");
  // r_i = a_ia - a_aa, B_ij = a_ij - a_aj
  EXPECT_EQ(ls.at(2), "b,-1,1,0");
  EXPECT_EQ(ls.at(3), "c,-1,0,1");
  EXPECT_EQ(run({"lv-map", fixture("viral_unstable.pp"), "--pivot", "z"}).code, 1);
}

TEST(Cli, ReduceProducesEquivalentSpp) {
  const auto r = run({"reduce", fixture("worked.pp")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(parse_protocol_file(r.out), ppp_to_spp(worked_example()));
}

TEST(Cli, OutFlagWritesFile) {
  const std::string path = ::testing::TempDir() + "/stationary.csv";
  const auto r = run({"--out", path, "stationary", fixture("swap.pp")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "0.5,0.5");
  std::remove(path.c_str());
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"validate"}).code, 1);
  EXPECT_EQ(run({"validate", "/nonexistent/file.pp"}).code, 1);
}
