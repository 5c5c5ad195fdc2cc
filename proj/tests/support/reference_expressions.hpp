#pragma once

#include <array>
#include <string_view>

namespace rashomon::test_support {

// Ten hinge-loss and ten MSE-loss expressions over z3, z17, z21, z29.
inline constexpr std::array<std::string_view, 10> kHingeExpressions{
    "z29*(z17^2 + z21^2) - exp(exp(z3))",
    "0.83*(z29 - 1.37*z3 - |z3|)*(z17^2 + z21^2 - 0.19) - 1.74",
    "(z29 - z3)*(|z17| + z21^2) - 2.88",
    "0.74*(z29 - 0.62*z3)*(z17^2 + z21^2) - 2.11",
    "(z17^2 + z21^2)*(z29 - sin(z3)) - 2.86",
    "0.74*(z17^2 + z21^2)*(z29 - sin(z3 + 0.18)) - 1.99",
    "0.71*(z17^2 + z21^2)*(z29 - z3/(1.4*sqrt(|z3|))) - 2.11",
    "(z17^2 + z21^2)*(z29 - exp(z3) + 0.71) - 2.03",
    "0.70*(z17^2 + z21^2)*(z29 - z3/(z3^2 + 0.66)) - 2.11",
    "(z29 - 0.44*z3)*(z17^2 + z21^2) - 2.56",
};

inline constexpr std::array<std::string_view, 10> kMseExpressions{
    "2.32*|z17| + z21^2 + 4.46*z29 - 3.16*(0.56*z3 + 1)^2 - 6.15",
    "z21^2 + 4.22*(sqrt(|z17|) + sin(z29) - sin(z3)) - 10.54",
    "z17^2 + z21^2 + z29 - 6.00*exp(sin(z3))",
    "z17^2 + z21^2 + z29 - z3^2 - 8.20*(0.35*z3 + 1)^2 + 2.13",
    "2*|z17| + z21^2 + 3.72*z29 - 3.72*(0.52*z3 + 1)^2 - 4.94",
    "3.79*z29 - |z17^2 + z21^2 - 3.93*(0.50*z3 + 1)^2 - 5.49| + 1.45",
    "z17^2 + z21^2 + (z3 + 3.99)*(z29 - z3) - 6.85",
    "z17^2 + (|z21| - z3 + 2.55)*exp(sin(z29)) - 10.00",
    "z17^2 + z21^2 + 4.32*(sin(z29) - sin(z3)) - 8.77",
    "(z17 - 0.25)^2 + z21^2 + 3.76*z29 - 3.16*exp(z3) - 3.53",
};

}  // namespace rashomon::test_support
