#pragma once

#include <algorithm>
#include <numeric>

#include "pairinfer/errors.hpp"

namespace pairinfer {

template <class T>
MarkedSequence<T> mark_mentions(std::span<const T> tokens, std::span<const TokenSpan> mentions,
                                const T& marker) {
  const std::size_t n = tokens.size();
  std::vector<std::size_t> by_start(mentions.size());
  std::iota(by_start.begin(), by_start.end(), 0);
  for (const auto& m : mentions) {
    if (m.start >= m.end || m.end > n) {
      throw DataError("mention span [" + std::to_string(m.start) + "," + std::to_string(m.end) +
                      ") out of range for " + std::to_string(n) + " tokens");
    }
  }
  std::stable_sort(by_start.begin(), by_start.end(),
                   [&](std::size_t a, std::size_t b) { return mentions[a].start < mentions[b].start; });
  std::vector<std::size_t> closing(n + 1, 0);
  for (const auto& m : mentions) ++closing[m.end];

  MarkedSequence<T> out;
  out.start_markers.assign(mentions.size(), 0);
  out.tokens.reserve(n + 2 * mentions.size());
  std::size_t next = 0;
  auto emit = [&](const T& t, bool is_marker) {
    out.tokens.push_back(t);
    out.is_marker.push_back(is_marker ? 1 : 0);
  };
  for (std::size_t pos = 0; pos <= n; ++pos) {
    for (std::size_t c = 0; c < closing[pos]; ++c) emit(marker, true);
    while (next < by_start.size() && mentions[by_start[next]].start == pos) {
      out.start_markers[by_start[next]] = out.tokens.size();
      emit(marker, true);
      ++next;
    }
    if (pos < n) emit(tokens[pos], false);
  }
  return out;
}

}  // namespace pairinfer
