#include "io/metrics.hpp"

#include <map>

#include <json.hpp>

#include "common.hpp"

namespace entnas {

namespace {

using ordered_json = nlohmann::ordered_json;

const char* kTypeTag[kNumCellTypes] = {"normal", "reduce"};

ordered_json loss_json(const LossReport& r) {
  ordered_json j;
  j["class"] = r.class_loss;
  j["op_entropy"] = r.op_entropy;
  j["edge"] = r.edge_loss;
  j["lambda_c"] = r.lambda_c;
  j["lambda_alpha"] = r.lambda_alpha;
  j["lambda_beta"] = r.lambda_beta;
  j["total"] = r.total;
  return j;
}

}  // namespace

std::string make_run_id(const std::string& config_json, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](unsigned char byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  for (char c : config_json) mix(static_cast<unsigned char>(c));
  for (int b = 0; b < 8; ++b) mix(static_cast<unsigned char>((seed >> (8 * b)) & 0xff));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MetricsWriter::MetricsWriter(const std::string& path, std::string run_id)
    : out_(path, std::ios::app), run_id_(std::move(run_id)) {
  if (!out_) fail(ErrorKind::Io, "cannot open metrics stream " + path);
}

void MetricsWriter::step_record(const StepInfo& info, double wall_ms) {
  ordered_json j;
  j["type"] = "step";
  j["run"] = run_id_;
  j["epoch"] = info.epoch;
  j["step"] = info.step;
  j["theta_lr"] = info.theta_lr;
  j["arch_lr"] = info.arch_lr;
  j["weight"] = loss_json(info.weight_losses);
  j["arch"] = loss_json(info.arch_losses);
  for (int type = 0; type < kNumCellTypes; ++type) {
    if (info.alpha_max[type].empty()) continue;
    j["alpha_max"][kTypeTag[type]] = info.alpha_max[type];
    j["beta_mass"][kTypeTag[type]] = info.beta_mass[type];
  }
  j["wall_ms"] = wall_ms;
  out_ << j.dump() << "\n";
  out_.flush();
}

void MetricsWriter::retrain_record(int epoch, int step, real lr, real loss, double wall_ms) {
  ordered_json j;
  j["type"] = "retrain_step";
  j["run"] = run_id_;
  j["epoch"] = epoch;
  j["step"] = step;
  j["lr"] = lr;
  j["loss"] = loss;
  j["wall_ms"] = wall_ms;
  out_ << j.dump() << "\n";
  out_.flush();
}

void MetricsWriter::raw_record(const std::string& json_object_line) {
  out_ << json_object_line << "\n";
  out_.flush();
}

MetricsSeries read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open metrics stream " + path);
  // per-epoch: sums for means, plus last-step masses
  std::map<int, std::array<real, 5>> sums;  // class, op, edge, total, count
  std::map<int, std::pair<std::vector<real>, std::vector<real>>> masses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      fail(ErrorKind::Format, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) continue;
    if (j["type"] != "step") continue;
    try {
      const int epoch = j.at("epoch").get<int>();
      const auto& arch = j.at("arch");
      auto& acc = sums[epoch];
      acc[0] += arch.at("class").get<real>();
      acc[1] += arch.at("op_entropy").get<real>();
      acc[2] += arch.at("edge").get<real>();
      acc[3] += arch.at("total").get<real>();
      acc[4] += 1;
      auto& mass = masses[epoch];
      mass.first = j.at("alpha_max").at("normal").get<std::vector<real>>();
      mass.second = j.at("beta_mass").at("normal").get<std::vector<real>>();
    } catch (const std::exception& e) {
      fail(ErrorKind::Format, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (sums.empty()) fail(ErrorKind::Format, path + ": no step records");
  MetricsSeries series;
  for (const auto& [epoch, acc] : sums) {
    series.epochs.push_back(epoch);
    series.class_loss.push_back(acc[0] / acc[4]);
    series.op_entropy.push_back(acc[1] / acc[4]);
    series.edge_loss.push_back(acc[2] / acc[4]);
    series.total.push_back(acc[3] / acc[4]);
    series.alpha_max.push_back(masses[epoch].first);
    series.beta_mass.push_back(masses[epoch].second);
  }
  return series;
}

}  // namespace entnas
