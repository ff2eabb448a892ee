// One line per acceptance criterion; exit status 1 if any fails.
#include <iostream>
#include <thread>

#include "fedminimax/acceptance.hpp"

int main(int argc, char** argv) {
  fedminimax::AcceptanceOptions opts;
  opts.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  opts.work_dir = "acceptance_out";
  std::vector<std::string> ids(argv + 1, argv + argc);
  if (ids.empty()) ids = fedminimax::acceptance_ids();
  int failed = 0;
  for (const auto& id : ids) {
    const auto r = fedminimax::acceptance_suite(id, opts);
    std::cout << format_report_line(r) << std::endl;
    if (!r.passed) ++failed;
  }
  std::cout << (ids.size() - failed) << "/" << ids.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
