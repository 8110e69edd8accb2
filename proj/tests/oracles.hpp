#pragma once

// Frozen expected values for the numeric tests. Everything here was computed
// with an independent reference implementation (numpy, double precision) and
// pasted in; the convolution/matmul inputs are integer-valued so results are
// exactly representable and comparisons can use equality, in f32 as well.
#include <cstdint>
#include <vector>

namespace oracles {

// input generator shared with the reference: ((i * mul) % mod) - sub
inline std::vector<double> fill(int64_t n, int64_t mul, int64_t mod, int64_t sub) {
  std::vector<double> v(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    v[static_cast<size_t>(i)] = static_cast<double>((i * mul) % mod - sub);
  }
  return v;
}

// conv: x = fill(_, 7919, 13, 6), w = fill(_, 104729, 11, 5)

// 2x5x5x2 (*) 3x3x2x3, stride 1, same -> [2,5,5,3]
inline const std::vector<double> kConvSameS1 = {
    -15, -41, 32,  -40, 22,  -48,  -15, -26, -26, 36,  -48, 22,  61,  32,  -41, -11, -10, 13,
    53,  -83, 45,  95,  77,  -106, -6,  94,  29,  -84, 54,  82,  17,  -9,  -13, -23, 54,  -34,
    -72, 6,   62,  -4,  -94, 80,   -10, -16, -66, -7,  -8,  13,  57,  -82, 43,  47,  52,  -108,
    -2,  4,   -12, 38,  -60, 7,    30,  24,  -37, -25, 67,  16,  -58, 31,  76,  39,  -18, -20,
    14,  46,  23,  6,   21,  36,   -26, -60, 60,  -40, 22,  -48, -15, -26, -26, 24,  -37, 1,
    -1,  21,  -78, -2,  4,   -12,  53,  -83, 45,  95,  77,  -106, 26, 68,  44,  -12, 9,   52,
    26,  -41, 13,  -23, 54,  -34,  -72, 6,   62,  22,  -54, 13,  -49, -3,  -78, -63, -34, -27,
    57,  -82, 43,  47,  52,  -108, -34, 32,  21,  30,  -52, -2,  73,  51,  -70, -25, 67,  16,
    -58, 31,  76,  13,  -57, 5};

// same tensors, stride 2, same -> [2,3,3,3]
inline const std::vector<double> kConvSameS2 = {
    -15, -41, 32, -15, -26, -26, 61, 32,  -41, 17,  -9,  -13, -72, 6,  62, -10, -16, -66,
    30,  24,  -37, -58, 31, 76,  14, 46,  23,  6,   21,  36,  -40, 22, -48, 24, -37, 1,
    -12, 9,   52, -23, 54, -34,  22, -54, 13,  30,  -52, -2,  -25, 67, 16, 13,  -57, 5};

// same tensors, stride 1, valid -> [2,3,3,3]
inline const std::vector<double> kConvValidS1 = {
    53,  -83, 45,  95, 77,  -106, -6,  94, 29,  -23, 54,  -34,  -72, 6,  62,  -4,  -94, 80,
    57,  -82, 43,  47, 52,  -108, -2,  4,  -12, -2,  4,   -12,  53,  -83, 45, 95,  77,  -106,
    26,  -41, 13,  -23, 54, -34,  -72, 6,  62,  -63, -34, -27,  57,  -82, 43, 47,  52,  -108};

// 1x6x6x2 (*) 3x3x2x3, stride 2, valid -> [1,2,2,3]
inline const std::vector<double> kConvValidS2 = {62, 26, 12, -10, 21, 74, 7, -30, -45, 0, 56, -9};

// 1x4x4x2 (*) 2x2x2x2, stride 1, same -> [1,4,4,2]; the odd pad lands bottom/right
inline const std::vector<double> kConvEvenKernel = {
    30,  -12, 38,  2,   -32, -10, -38, 38, 36, -21, -73, -72, -39, 46, 12, -20,
    -10, -30, -15, 49,  32,  -15, -3,  -26, -13, 24, 26,  -16, 26,  -4, -2, 8};

// depthwise: 1x5x5x3 (*) 3x3x3, stride 2, same -> [1,3,3,3]
inline const std::vector<double> kDepthwiseSameS2 = {
    -10, -16, 38,  53, -9,  16,  42,  0,  -9, 18,  63,  -36, -6, 103,
    -48, -27, 10,  -24, -23, -9, -15, -28, -19, 84, -12, -30, -6};

// [3,4] x [4,5]
inline const std::vector<double> kMatmul = {52, -34, -32, -8, 16, -34, 18, 15,
                                            1,  -13, 10,  -34, 10, 10, 10};

// batch norm oracle; x is the 2x2x2x2 block in the test, gamma {0.5,2},
// beta {1,-1}, running stats {1,2}/{1,0.5}, momentum 0.1, eps 1e-5
inline const std::vector<double> kBnMu = {0.8125, 0.75};
inline const std::vector<double> kBnVar = {3.48046875, 3.234375};
inline const std::vector<double> kBnInvstd = {0.5360193980997091, 0.5560375779111975};
inline const std::vector<double> kBnTrainY = {
    0.9162469690469205,  -2.946131522689191,   1.3182615176217023,    2.058206678511586,
    0.7152396947595295,  -0.44396242208880254, 1.8542809157214113,    -4.058206678511586,
    1.0502518185718477,  -1.8340563668667962,  -0.021786977627570536, 0.9461315226891911,
    0.9832493938093841,  -2.390093944777994,   1.184256668096775,     0.6681127337335924};
inline const std::vector<double> kBnRunMean1 = {0.9812500000000001, 1.875};
inline const std::vector<double> kBnRunVar1 = {1.248046875, 0.7734375};
inline const std::vector<double> kBnInferY = {
    0.750001249990625,  -9.4851965226976,  1.49999750001875,    3.2425982613487996,
    0.37500312497656263, -3.1212991306744, 2.4999925000562495,  -12.3135953635968,
    1.0,                -6.6567976817984,  -0.9999900000749995, 0.4141994204496,
    0.8750006249953125, -8.070997102248,   1.249998750009375,   -0.2929002897752};

// bce over yhat {0.9,0.1,0.5,1.0,0.0,0.3}, y {1,0,1,0,1,1}, clamp 1e-7
inline const double kBceMean = 5.724005386440755;
inline const std::vector<double> kBceGrad = {-0.1851851851851852, 0.18518518518518515,
                                             -0.3333333333333333, 0.0,
                                             0.0,                 -0.5555555555555555};

// adam: p0 {1,-2,0.5,3}, three fixed gradient steps, lr 1e-3
inline const std::vector<double> kAdamP1 = {0.9990000001, -1.99900000005, 0.49900000003333334,
                                            3.000999999975};
inline const std::vector<double> kAdamP2 = {0.9987336630940339, -1.998910675047648,
                                            0.498961878001076, 3.001014004441833};
inline const std::vector<double> kAdamP3 = {0.9980755515435138, -1.9992560377795638,
                                            0.49922703541633445, 3.0012492674302678};

}  // namespace oracles
