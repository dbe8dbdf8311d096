#include "drml/common.hpp"

#include <algorithm>

namespace drml {

double stable_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  KahanSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::vector<std::vector<int>> combinations(int q, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > q) return out;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  if (k == 0) {
    out.push_back({});
    return out;
  }
  while (true) {
    out.push_back(idx);
    int j = k - 1;
    while (j >= 0 && idx[j] == q - k + j) --j;
    if (j < 0) break;
    ++idx[j];
    for (int m = j + 1; m < k; ++m) idx[m] = idx[m - 1] + 1;
  }
  return out;
}

}  // namespace drml
