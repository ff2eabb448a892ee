#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace fedminimax {

struct AcceptanceOptions {
  int threads = 1;
  std::filesystem::path work_dir = "acceptance_out";
};

struct AcceptanceReport {
  std::string id;
  std::string title;
  bool passed = false;
  std::string summary;  // measured value against its band
  nlohmann::json measured = nlohmann::json::object();
  double seconds = 0.0;
};

/// Registered suite ids, in criterion order.
const std::vector<std::string>& acceptance_ids();

/// Runs one suite end-to-end with pinned seeds. Unknown ids throw
/// std::invalid_argument; failures inside a suite are reported, not thrown.
AcceptanceReport acceptance_suite(const std::string& id,
                                  const AcceptanceOptions& opts = {});

/// "PASS <id>: <summary> (<seconds> s)".
std::string format_report_line(const AcceptanceReport& r);

}  // namespace fedminimax
