#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <string>

#include "dcwp/dcwp.h"

namespace {

struct Cfg {
  dcwp_config* ptr = dcwp_config_create();
  ~Cfg() { dcwp_config_free(ptr); }
  void set(const char* k, const char* v) { REQUIRE(dcwp_config_set(ptr, k, v) == DCWP_OK); }
};

struct Str {
  char* ptr = nullptr;
  ~Str() { dcwp_string_free(ptr); }
  std::string view() const { return ptr ? std::string(ptr) : std::string(); }
};

void tiny_experiment(Cfg& cfg) {
  cfg.set("dataset.kind", "synth");
  cfg.set("dataset.train_n", "500");
  cfg.set("dataset.test_n", "500");
  cfg.set("dataset.classes", "3");
  cfg.set("dataset.invariant_dims", "8");
  cfg.set("dataset.spurious_dims", "12");
  cfg.set("dataset.rho", "0.05");
  cfg.set("model.hidden", "12,10");
  cfg.set("batch", "32");
  cfg.set("mining.iters", "60");
  cfg.set("pretrain.iters", "80");
  cfg.set("theta.iters", "60");
  cfg.set("finetune.iters", "40");
  cfg.set("loss.lambda_up", "8");
  cfg.set("loss.lambda_up_finetune", "8");
  cfg.set("seed", "3");
}

}  // namespace

TEST_SUITE_BEGIN("capi");

TEST_CASE("config canonicalization and error reporting") {
  Cfg cfg;
  Str canon;
  CHECK(dcwp_config_canonical(cfg.ptr, &canon.ptr) == DCWP_OK);
  CHECK(canon.view().find("method = dcwp") != std::string::npos);

  cfg.set("no.such.key", "1");
  Str bad;
  dcwp_status st = dcwp_config_canonical(cfg.ptr, &bad.ptr);
  CHECK(st == DCWP_ERR_INVALID_ARGUMENT);
  CHECK(std::string(dcwp_last_error()).find("no.such.key") != std::string::npos);
}

TEST_CASE("status codes map argument errors") {
  Cfg cfg;
  cfg.set("loss.q", "7");  // out of (0, 1]
  dcwp_report* rep = nullptr;
  CHECK(dcwp_run_experiment(cfg.ptr, &rep) == DCWP_ERR_INVALID_ARGUMENT);
  CHECK(rep == nullptr);
  CHECK(dcwp_run_experiment(nullptr, &rep) == DCWP_ERR_INVALID_ARGUMENT);
}

TEST_CASE("end-to-end run through the shared-library surface") {
  Cfg cfg;
  tiny_experiment(cfg);
  dcwp_report* rep = nullptr;
  REQUIRE(dcwp_run_experiment(cfg.ptr, &rep) == DCWP_OK);
  double acc = -1.0, ratio = -1.0;
  CHECK(dcwp_report_metric(rep, "unbiased_accuracy", &acc) == DCWP_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(dcwp_report_metric(rep, "pruning_ratio", &ratio) == DCWP_OK);
  CHECK(dcwp_report_metric(rep, "nonsense", &acc) == DCWP_ERR_INVALID_ARGUMENT);

  Str json, csv, table, line;
  CHECK(dcwp_report_json(rep, 0, &json.ptr) == DCWP_OK);
  CHECK(json.view().find("unbiased_accuracy") != std::string::npos);
  CHECK(dcwp_report_json(rep, 1, &line.ptr) == DCWP_OK);
  CHECK(line.view().find('\n') == line.view().size() - 1);  // single line
  CHECK(dcwp_report_csv(rep, &csv.ptr) == DCWP_OK);
  CHECK(dcwp_report_table(rep, &table.ptr) == DCWP_OK);
  dcwp_report_free(rep);
}

TEST_CASE("report files round-trip through load") {
  namespace fs = std::filesystem;
  Cfg cfg;
  tiny_experiment(cfg);
  cfg.set("out_dir", "capi_run");
  dcwp_report* rep = nullptr;
  REQUIRE(dcwp_run_experiment(cfg.ptr, &rep) == DCWP_OK);
  Str direct;
  REQUIRE(dcwp_report_json(rep, 0, &direct.ptr) == DCWP_OK);
  dcwp_report_free(rep);

  dcwp_report* loaded = nullptr;
  REQUIRE(dcwp_report_load("capi_run/report.json", &loaded) == DCWP_OK);
  Str reloaded;
  REQUIRE(dcwp_report_json(loaded, 0, &reloaded.ptr) == DCWP_OK);
  CHECK(direct.view() == reloaded.view());
  dcwp_report_free(loaded);

  dcwp_report* missing = nullptr;
  CHECK(dcwp_report_load("capi_run/nope.json", &missing) == DCWP_ERR_IO);
  fs::remove_all("capi_run");
}

TEST_CASE("dataset generation and digit synthesis") {
  namespace fs = std::filesystem;
  Cfg cfg;
  cfg.set("dataset.kind", "binary");
  cfg.set("dataset.p", "0.8");
  cfg.set("dataset.spurious_dims", "6");
  cfg.set("dataset.train_n", "300");
  cfg.set("dataset.test_n", "200");
  Str counts;
  REQUIRE(dcwp_data_generate(cfg.ptr, "capi_data", &counts.ptr) == DCWP_OK);
  CHECK(counts.view().find("conflicting") != std::string::npos);
  CHECK(fs::exists("capi_data/train.dcwpd"));
  CHECK(fs::exists("capi_data/manifest.json"));
  fs::remove_all("capi_data");

  REQUIRE(dcwp_data_synth_digits("capi_digits.idx", "capi_labels.idx", 50, 9) == DCWP_OK);
  CHECK(fs::exists("capi_digits.idx"));
  std::remove("capi_digits.idx");
  std::remove("capi_labels.idx");
}

TEST_CASE("theory runners emit csv and pass their checks") {
  namespace fs = std::filesystem;
  int ok = 0;
  Str details;
  REQUIRE(dcwp_theory_misalign("capi_mis.csv", 3, 0.9, 16, 4000, 5, &ok, &details.ptr) == DCWP_OK);
  CHECK(ok == 1);
  CHECK(details.view().find("cross_mean") != std::string::npos);
  CHECK(fs::exists("capi_mis.csv"));
  std::remove("capi_mis.csv");

  REQUIRE(dcwp_theory_flow("capi_flow.csv", 0.75, 3, 0.1, 0.05, 1e-3, 1e-3, 30, &ok, nullptr) ==
          DCWP_OK);
  CHECK(ok == 1);
  std::remove("capi_flow.csv");

  // invalid argument surfaces as a usage-style status
  CHECK(dcwp_theory_misalign("x.csv", 15, 0.9, 4, 100, 1, &ok, nullptr) ==
        DCWP_ERR_INVALID_ARGUMENT);
}

TEST_SUITE_END();
