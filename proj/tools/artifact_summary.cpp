// Prints a human-readable summary of an experiment output directory:
// the manifest, and per-CSV row counts with numeric column means.
//
//   artifact_summary <run-dir>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

static std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

static std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

static void summarize_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  if (!std::getline(in, line)) {
    std::printf("  %s: empty\n", p.filename().string().c_str());
    return;
  }
  const std::vector<std::string> header = split_line(line);
  std::vector<double> sums(header.size(), 0.0);
  std::vector<bool> numeric(header.size(), true);
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line);
    for (std::size_t k = 0; k < header.size() && k < fields.size(); ++k) {
      try {
        std::size_t used = 0;
        const double v = std::stod(fields[k], &used);
        if (used != fields[k].size()) throw std::invalid_argument("trailing");
        sums[k] += v;
      } catch (const std::exception&) {
        numeric[k] = false;
      }
    }
    ++rows;
  }
  std::printf("  %-40s %5d rows", p.string().c_str(), rows);
  if (rows > 0) {
    std::printf("  |");
    for (std::size_t k = 0; k < header.size(); ++k)
      if (numeric[k])
        std::printf(" mean(%s)=%.6g", header[k].c_str(),
                    sums[k] / double(rows));
  }
  std::printf("\n");
}

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: artifact_summary <run-dir>\n");
    return 2;
  }
  const fs::path root = argv[1];
  const fs::path manifest = root / "manifest.json";
  if (!fs::exists(manifest)) {
    std::fprintf(stderr, "no manifest.json under %s\n", root.string().c_str());
    return 1;
  }

  const json m = json::parse(slurp(manifest));
  std::printf("experiment   %s%s\n", m.at("experiment").get<std::string>().c_str(),
              m.value("smoke", false) ? "  (smoke)" : "");
  std::printf("config hash  %s\n", m.at("config_hash").get<std::string>().c_str());
  std::printf("seeds       ");
  for (const auto& s : m.at("seeds")) std::printf(" %llu",
      (unsigned long long)s.get<std::uint64_t>());
  std::printf("\n");

  std::vector<fs::path> csvs;
  for (const auto& rel : m.at("outputs")) {
    const fs::path p = root / rel.get<std::string>();
    if (p.extension() == ".csv") csvs.push_back(p);
  }
  std::printf("outputs      %zu files (%zu csv)\n", m.at("outputs").size(),
              csvs.size());
  std::error_code ec;
  fs::current_path(root, ec);  // print paths relative to the run dir
  for (const auto& abs : csvs) summarize_csv(fs::relative(abs, root));

  const fs::path agg = root / "aggregate.json";
  if (fs::exists(agg))
    std::printf("aggregate.json:\n%s\n", json::parse(slurp(agg)).dump(2).c_str());
  return 0;
}
