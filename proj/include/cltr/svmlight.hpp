#ifndef CLTR_SVMLIGHT_HPP
#define CLTR_SVMLIGHT_HPP

#include "cltr/core.hpp"

#include <iosfwd>
#include <string>

namespace cltr {

// SVMlight / LETOR ranking format:
//   <rel> qid:<q> <idx>:<val> ... # comment
// Feature indices are 1-based on disk. Relevance labels are binarized with rel >= 1.
// Queries are grouped by qid in order of first appearance.
Dataset read_svmlight(std::istream& in, const std::string& source = "<stream>");
Dataset load_svmlight(const std::string& path);

void write_svmlight(std::ostream& out, const Dataset& data);
void save_svmlight(const Dataset& data, const std::string& path);

}  // namespace cltr

#endif  // CLTR_SVMLIGHT_HPP
