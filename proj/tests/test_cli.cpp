#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "sequst_test_cli";

struct Run {
  int status = 0;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  fs::create_directories(kWork);
  const std::string cmd = std::string("\"") + SEQUST_CLI_PATH + "\" --log-level error " + args + " > \"" +
                          (kWork / "stdout.txt").string() + "\" 2> \"" + (kWork / "stderr.txt").string() + "\"";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(kWork / "stdout.txt");
  r.err = slurp(kWork / "stderr.txt");
  return r;
}

std::string w(const std::string& name) { return "\"" + (kWork / name).string() + "\""; }

}  // namespace

TEST_CASE("end to end through the command line") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);

  REQUIRE(cli("synth --classes 3 --sentences 150 --test-sentences 40 --out " + w("data")).status == 0);
  CHECK(fs::exists(kWork / "data" / "corpus.conll"));
  CHECK(fs::exists(kWork / "data" / "test.conll"));

  REQUIRE(cli("split --corpus " + w("data/corpus.conll") + " --shots 3 --seed 4 --out " + w("split")).status == 0);

  {
    std::ofstream cfg(kWork / "tiny.conf");
    cfg << "embed_dim = 8\nhidden_dim = 8\nteacher_epochs = 3\nstudent_epochs = 1\nt_passes = 3\nmax_iterations = 1\n";
  }
  const std::string common = " --config " + w("tiny.conf") + " --seed 5 --test " + w("data/test.conll");
  const Run train = cli("train --split " + w("split") + common + " --out " + w("sup"));
  REQUIRE(train.status == 0);
  CHECK(train.out.find("F1 = ") != std::string::npos);
  CHECK(fs::exists(kWork / "sup" / "metrics.json"));
  CHECK(fs::exists(kWork / "sup" / "seed_5" / "final.json"));

  const Run st = cli("selftrain --mode sequst --split " + w("split") + common + " --out " + w("st"));
  REQUIRE(st.status == 0);
  CHECK(fs::exists(kWork / "st" / "seed_5" / "records.jsonl"));
  REQUIRE(cli("selftrain --mode sequst --split " + w("split") + common + " --out " + w("st2")).status == 0);
  CHECK(slurp(kWork / "st" / "metrics.json") == slurp(kWork / "st2" / "metrics.json"));

  const Run ev = cli("evaluate --gold " + w("data/test.conll") + " --checkpoint " + w("st/seed_5/final.json"));
  REQUIRE(ev.status == 0);
  CHECK(ev.out.find("F1 = ") != std::string::npos);

  const Run self = cli("evaluate --gold " + w("data/test.conll") + " --pred " + w("data/test.conll"));
  CHECK(self.out.find("F1 = 100.00") != std::string::npos);

  REQUIRE(cli("analyze --checkpoint " + w("sup/seed_5/final.json") + " --data " + w("data/test.conll") +
              " --t-passes 3 --out " + w("an"))
              .status == 0);
  CHECK(slurp(kWork / "an" / "error_rates.json").find("certainty") != std::string::npos);

  REQUIRE(cli("export-embeddings --checkpoint " + w("sup/seed_5/final.json") + " --data " + w("data/test.conll") +
              " --out " + w("emb.jsonl"))
              .status == 0);
  CHECK(slurp(kWork / "emb.jsonl").find("\"vector\"") != std::string::npos);
  fs::remove_all(kWork);
}

TEST_CASE("errors exit non-zero with a message") {
  const Run missing = cli("evaluate --gold " + w("nope.conll") + " --pred " + w("nope.conll"));
  CHECK(missing.status == 1);
  CHECK(missing.err.find("error:") != std::string::npos);

  CHECK(cli("selftrain --mode sequst --rho 1.5 --corpus " + w("nope.conll")).status != 0);
  CHECK(cli("").status != 0);
  CHECK(cli("no-such-command").status != 0);
}
