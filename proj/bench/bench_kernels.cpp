// Times every kernel in gnr::kernels against its serial counterpart in
// gnr::reference on shapes taken from a 64 px training step.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gnr/kernels.hpp"
#include "gnr/reference.hpp"
#include "gnr/rng.hpp"

using namespace gnr;

namespace {

Tensor random(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = static_cast<float>(rng.normal());
  return t;
}

double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(static_cast<double>(a[i]) - b[i]));
  return m;
}

double seconds_per_call(const std::function<void()>& f, double budget) {
  f();  // warm-up
  int calls = 0;
  const auto t0 = std::chrono::steady_clock::now();
  double elapsed = 0.0;
  do {
    f();
    ++calls;
    elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } while (elapsed < budget);
  return elapsed / calls;
}

struct Case {
  std::string name, shape;
  std::function<Tensor()> serial, parallel;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serial reference vs parallel kernel timings"};
  double budget = 0.5;
  app.add_option("--budget", budget, "Seconds spent timing each variant");
  CLI11_PARSE(app, argc, argv);

  Rng rng(1);
  std::vector<Case> cases;

  for (auto [m, n, k] : {std::tuple{64, 4096, 288}, std::tuple{256, 256, 256}, std::tuple{7, 128, 512}}) {
    const Tensor a = random(rng, {m, k}), b = random(rng, {k, n});
    auto run = [=](auto gemm) {
      return [=] {
        Tensor c({m, n});
        gemm(false, false, m, n, k, 1.0f, a.data(), b.data(), 0.0f, c.data());
        return c;
      };
    };
    cases.push_back({"gemm", std::to_string(m) + "x" + std::to_string(k) + " * " + std::to_string(k) + "x" + std::to_string(n),
                     run(reference::gemm), run(kernels::gemm)});
  }

  for (auto [b, cin, cout, r] : {std::tuple{7, 32, 32, 64}, std::tuple{7, 64, 64, 32}, std::tuple{14, 128, 128, 16}}) {
    const Tensor x = random(rng, {b, cin, r, r}), w = random(rng, {cout, cin, 3, 3});
    const Tensor gy = random(rng, {b, cout, r, r});
    const std::string shape = std::to_string(b) + "x" + std::to_string(cin) + "x" + std::to_string(r) + "^2 -> " +
                              std::to_string(cout) + ", k3";
    cases.push_back({"conv2d", shape, [=] { return reference::conv2d(x, w, 1); }, [=] { return kernels::conv2d(x, w, 1); }});
    cases.push_back({"conv2d_input_grad", shape, [=] { return reference::conv2d_input_grad(gy, w, 1, x.shape()); },
                     [=] { return kernels::conv2d_input_grad(gy, w, 1, x.shape()); }});
    cases.push_back({"conv2d_weight_grad", shape, [=] { return reference::conv2d_weight_grad(x, gy, 1, w.shape()); },
                     [=] { return kernels::conv2d_weight_grad(x, gy, 1, w.shape()); }});
  }

  {
    const Tensor a = random(rng, {7, 64, 64, 64}), s = random(rng, {7, 64, 1, 1});
    cases.push_back({"broadcast_mul", "7x64x64^2 * 7x64x1x1",
                     [=] { return reference::broadcast_binary(kernels::BinaryOp::Mul, a, s); },
                     [=] { return kernels::broadcast_binary(kernels::BinaryOp::Mul, a, s); }});
    cases.push_back({"sum_to", "7x64x64^2 -> 1x64x1x1", [=] { return reference::sum_to(a, {1, 64, 1, 1}); },
                     [=] { return kernels::sum_to(a, {1, 64, 1, 1}); }});
    cases.push_back({"avg_pool2", "7x64x64^2", [=] { return reference::avg_pool2(a); }, [=] { return kernels::avg_pool2(a); }});
    cases.push_back({"upsample2", "7x64x64^2", [=] { return reference::upsample2(a); }, [=] { return kernels::upsample2(a); }});
  }

  {
    const Tensor f = random(rng, {256, 2048});
    cases.push_back({"minibatch_stddev", "256x2048", [=] { return reference::minibatch_stddev(f, 1e-8f); },
                     [=] { return kernels::minibatch_stddev(f, 1e-8f); }});
  }

  {
    const int n = 10000, d = 64;
    std::vector<double> rows(static_cast<std::size_t>(n) * d);
    for (double& v : rows) v = rng.normal();
    auto run = [=](auto fn) {
      return [=] {
        std::vector<double> mean(d), cov(static_cast<std::size_t>(d) * d);
        fn(rows, n, d, mean, cov);
        Tensor out({d * d});
        for (int i = 0; i < d * d; ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(cov[static_cast<std::size_t>(i)]);
        return out;
      };
    };
    cases.push_back({"mean_covariance", "10000x64", run(reference::mean_covariance), run(kernels::mean_covariance)});
  }

  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-20s %-30s %12s %12s %9s %11s\n", "kernel", "shape", "serial ms", "parallel ms", "speedup", "max |diff|");
  for (const Case& c : cases) {
    const double diff = max_diff(c.serial(), c.parallel());
    const double ts = seconds_per_call([&] { c.serial(); }, budget);
    const double tp = seconds_per_call([&] { c.parallel(); }, budget);
    std::printf("%-20s %-30s %12.3f %12.3f %8.1fx %11.2e\n", c.name.c_str(), c.shape.c_str(), ts * 1e3, tp * 1e3, ts / tp, diff);
  }
  return 0;
}
