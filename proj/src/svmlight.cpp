#include "cltr/svmlight.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <sstream>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cltr {
namespace {

struct ParsedLine {
  double label = 0.0;
  std::string qid;
  std::vector<std::pair<std::size_t, double>> features;
};

[[noreturn]] void fail(const std::string& source, std::size_t line_no, const std::string& what) {
  throw DataError(source + ":" + std::to_string(line_no) + ": " + what);
}

double parse_double(std::string_view tok, const std::string& source, std::size_t line_no) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(value)) {
    fail(source, line_no, "bad number '" + std::string(tok) + "'");
  }
  return value;
}

}  // namespace

Dataset read_svmlight(std::istream& in, const std::string& source) {
  std::vector<ParsedLine> lines;
  std::string raw;
  std::size_t line_no = 0;
  std::size_t max_index = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream tokens(raw);
    std::string tok;
    if (!(tokens >> tok)) continue;

    ParsedLine parsed;
    parsed.label = parse_double(tok, source, line_no);
    if (!(tokens >> tok) || tok.rfind("qid:", 0) != 0 || tok.size() == 4) {
      fail(source, line_no, "expected qid:<id> after label");
    }
    parsed.qid = tok.substr(4);
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0) fail(source, line_no, "bad feature token '" + tok + "'");
      std::size_t index = 0;
      const std::string_view idx_str(tok.data(), colon);
      auto [ptr, ec] = std::from_chars(idx_str.data(), idx_str.data() + idx_str.size(), index);
      if (ec != std::errc() || ptr != idx_str.data() + idx_str.size() || index == 0) {
        fail(source, line_no, "bad feature index in '" + tok + "'");
      }
      const double value = parse_double(std::string_view(tok).substr(colon + 1), source, line_no);
      max_index = std::max(max_index, index);
      parsed.features.emplace_back(index - 1, value);
    }
    lines.push_back(std::move(parsed));
  }

  Dataset data;
  data.feature_dim = max_index;
  std::unordered_map<std::string, std::size_t> group_of;
  std::vector<std::vector<const ParsedLine*>> groups;
  std::vector<std::string> ids;
  for (const auto& line : lines) {
    auto [it, inserted] = group_of.try_emplace(line.qid, groups.size());
    if (inserted) {
      groups.emplace_back();
      ids.push_back(line.qid);
    }
    groups[it->second].push_back(&line);
  }
  data.queries.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    QueryInstance q;
    q.query_id = ids[g];
    q.features = MatrixXd::Zero(static_cast<Eigen::Index>(groups[g].size()),
                                static_cast<Eigen::Index>(max_index));
    std::vector<int> rel(groups[g].size());
    for (std::size_t c = 0; c < groups[g].size(); ++c) {
      rel[c] = groups[g][c]->label >= 1.0 ? 1 : 0;
      for (const auto& [index, value] : groups[g][c]->features) {
        q.features(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(index)) = value;
      }
    }
    q.relevances = std::move(rel);
    data.queries.push_back(std::move(q));
  }
  return data;
}

Dataset load_svmlight(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_svmlight(in, path);
}

void write_svmlight(std::ostream& out, const Dataset& data) {
  out << std::setprecision(17);
  for (const auto& q : data.queries) {
    for (std::size_t c = 0; c < q.num_candidates(); ++c) {
      out << (q.relevances ? (*q.relevances)[c] : 0) << " qid:" << q.query_id;
      for (std::size_t f = 0; f < q.dim(); ++f) {
        const double v = q.features(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(f));
        // The last index is always written so the dimension survives a round trip.
        if (v != 0.0 || f + 1 == q.dim()) out << ' ' << (f + 1) << ':' << v;
      }
      out << '\n';
    }
  }
}

void save_svmlight(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_svmlight(out, data);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace cltr
