#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bnsens/formats.hpp"
#include "bnsens/io.hpp"
#include "support.hpp"

using namespace bnsens;
using namespace bnsens::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

// Runs the CLI through the shell; stderr is dropped unless merged.
CliRun cli(const std::string& args, bool merge_stderr = false) {
  const std::string cmd = std::string("'") + BNSENS_CLI_PATH + "' " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("bnsens-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string write(const std::string& name, const std::string& text) {
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p.string();
  }

  // Dyspnea with assessments taken from the network itself plus one reversed.
  std::string assessed_document() {
    Document doc = dyspnea_document();
    const InferenceContext ctx(doc.network);
    int k = 0;
    for (const char* ev : {"A=t_A,H=t_H", "D=t_D", "H=f_H", "G=t_G"}) {
      Assessment a;
      a.scenario = {parse_evidence(doc.network, ev), doc.network.index_of("B")};
      a.assessed = query_marginal(ctx, a.scenario.evidence, a.scenario.target);
      a.label = "consistent " + std::to_string(k++);
      doc.assessments.push_back(a);
    }
    Assessment bad;
    bad.scenario = {parse_evidence(doc.network, "H=t_H"), doc.network.index_of("F")};
    bad.assessed = query_marginal(ctx, bad.scenario.evidence, bad.scenario.target).reverse();
    bad.label = "reversed";
    doc.assessments.push_back(bad);
    return write("assessed.json", serialize_document(doc));
  }
};

}  // namespace

TEST_F(CliTest, SummaryMatchesGoldenNodeMaxima) {
  const CliRun r = cli("sens dyspnea --evidence A=t_A,H=t_H --target B --summary");
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* line : {"  A       0 ", "  B       1.601 ", "  D       0 ", "  E       0.04125 ", "  F       0.01877 ",
                           "  G       0.03796 ", "  H       0.08775 "})
    EXPECT_NE(r.out.find(line), std::string::npos) << line << "\n" << r.out;
  EXPECT_NE(r.out.find("B[t_B | A=t_A] -> t_B"), std::string::npos);
}

TEST_F(CliTest, SummaryJsonMatchesLibrary) {
  const CliRun r = cli("sens dyspnea -e A=t_A,H=t_H -t B --summary --format json");
  ASSERT_EQ(r.code, 0);
  const Network net = dyspnea_document().network;
  const auto rep = sensitivities(net, dyspnea_scenario(net));
  EXPECT_EQ(r.out, canonical_dump(sensitivity_response_json(net, rep, true)) + "\n");
}

TEST_F(CliTest, QueryTableAndJson) {
  const CliRun t = cli("query dyspnea --evidence A=t_A,H=t_H --target B");
  ASSERT_EQ(t.code, 0);
  EXPECT_NE(t.out.find("t_B       0.08775"), std::string::npos) << t.out;
  const CliRun j = cli("query dyspnea --evidence A=t_A,H=t_H --target B --format json");
  ASSERT_EQ(j.code, 0);
  const json body = json::parse(j.out);
  const Network net = dyspnea_document().network;
  EXPECT_NEAR(body["distribution"]["t_B"].get<double>(),
              brute_marginal(net, parse_evidence(net, "A=t_A,H=t_H"), net.index_of("B"))(0), 1e-12);
  EXPECT_EQ(body["scenario"]["target"], "B");
  // Named scenario gives the same bytes.
  EXPECT_EQ(cli("query dyspnea --scenario asia-dyspnea -f json").out, j.out);
}

TEST_F(CliTest, ValidateReportsOkAndCycles) {
  const CliRun ok = cli("validate dyspnea");
  EXPECT_EQ(ok.code, 0);
  EXPECT_EQ(ok.out.rfind("OK: 8 variables", 0), 0u) << ok.out;
  const std::string cyclic = write("cyclic.json", R"({"format":"bnsens","version":1,"network":{"variables":[
    {"id":"P","states":["p0","p1"],"parents":["Q"],"kind":"table","rows":[
      {"given":["q0"],"theta":{"p0":1,"p1":1}},{"given":["q1"],"theta":{"p0":1,"p1":1}}]},
    {"id":"Q","states":["q0","q1"],"parents":["P"],"kind":"table","rows":[
      {"given":["p0"],"theta":{"q0":1,"q1":1}},{"given":["p1"],"theta":{"q0":1,"q1":1}}]}]}})");
  const CliRun bad = cli("validate " + cyclic, true);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("cycle"), std::string::npos) << bad.out;
  const CliRun syntax = cli("validate " + write("broken.json", "{\n  \"format\": \n}"), true);
  EXPECT_EQ(syntax.code, 1);
  EXPECT_NE(syntax.out.find(":3:"), std::string::npos) << syntax.out;
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate dyspnea").code, 2);
  EXPECT_EQ(cli("query dyspnea --evidence A=t_A").code, 2);
  EXPECT_EQ(cli("query dyspnea -t B --format xml").code, 2);
  EXPECT_EQ(cli("mc-sens dyspnea -t B --n 0").code, 2);
  const CliRun zero = cli("query dyspnea --evidence B=f_B,E=f_E,C=t_C --target A", true);
  EXPECT_EQ(zero.code, 1);
  EXPECT_NE(zero.out.find("zero-probability"), std::string::npos) << zero.out;
  const CliRun unknown = cli("query dyspnea --evidence Z=t_Z --target B", true);
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.out.find("Z"), std::string::npos) << unknown.out;
  EXPECT_EQ(cli("query /nonexistent/file.json -t B").code, 1);
}

TEST_F(CliTest, FullReportJsonParsesBack) {
  const CliRun r = cli("sens dyspnea -e A=t_A,H=t_H -t B -f json");
  ASSERT_EQ(r.code, 0);
  const Network net = dyspnea_document().network;
  const auto back = sensitivity_from_json(net, json::parse(r.out));
  const auto rep = sensitivities(net, dyspnea_scenario(net));
  EXPECT_EQ(back.derivatives, rep.derivatives);
  const CliRun some = cli("sens dyspnea -e A=t_A,H=t_H -t B --nodes B,H -f json");
  ASSERT_EQ(some.code, 0);
  for (const auto& p : sensitivity_from_json(net, json::parse(some.out)).params) {
    const std::string& id = net.variable(p.node).id;
    EXPECT_TRUE(id == "B" || id == "H") << id;
  }
}

TEST_F(CliTest, MonteCarloIsReproducible) {
  const std::string args = "mc-sens dyspnea -e A=t_A,H=t_H -t B --method lw --n 20000 --seed 9 -f json";
  const CliRun a = cli(args);
  const CliRun b = cli(args + " --threads 1");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const json j = json::parse(a.out);
  ASSERT_FALSE(j["entries"].empty());
  EXPECT_TRUE(j["entries"][0].contains("standard_error")) << j.dump();
  EXPECT_NE(a.out, cli("mc-sens dyspnea -e A=t_A,H=t_H -t B --method lw --n 20000 --seed 10 -f json").out);
  EXPECT_EQ(cli("mc-sens dyspnea -e A=t_A,H=t_H -t B --method gibbs").code, 2);
}

TEST_F(CliTest, FitWritesDocumentAndFlagsOutlier) {
  const std::string in = assessed_document();
  const std::string out = (dir / "fitted.json").string();
  const CliRun r = cli("fit " + in + " --rule log --step 0.01 --epochs 30 --seed 4 --out " + out + " -f json");
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["outliers"], json::array({4}));
  ASSERT_TRUE(fs::exists(out));
  const Document fitted = load_document(out);
  EXPECT_EQ(fitted.assessments.size(), 5u);
  EXPECT_TRUE(validate_network(fitted.network).ok());
  const auto& trace = j["objective_trace"];
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i].get<double>(), trace[i - 1].get<double>() + 1e-12);
}

TEST_F(CliTest, OutliersCommand) {
  const std::string in = assessed_document();
  const CliRun t = cli("outliers " + in + " --rule log");
  ASSERT_EQ(t.code, 0);
  EXPECT_NE(t.out.find("#4 reversed"), std::string::npos) << t.out;
  const json j = json::parse(cli("outliers " + in + " --rule log --threshold 3 -f json").out);
  EXPECT_EQ(j["outliers"], json::array({4}));
  EXPECT_EQ(j["distances"].size(), 5u);
  EXPECT_EQ(cli("outliers " + in + " --threshold -1").code, 2);
}
