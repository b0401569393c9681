#pragma once

// Published horizon table for the neutral strategy, used only as a format fixture.

#include <string_view>

namespace support {

inline constexpr std::string_view kPublishedReport =
    "Horizon,Ann Sharpe,Max Drawdown,Ann Returns,Ann Volatility,Neutral Cost (%)\n"
    "2,0.516,-0.015,0.013,0.024,0.003\n"
    "4,-0.483,-0.028,-0.009,0.019,-0.006\n"
    "8,0.227,-0.017,0.005,0.022,0.007\n"
    "16,0.003,-0.019,0.000,0.024,0.000\n"
    "32,0.420,-0.015,0.014,0.034,0.080\n"
    "64,1.285,-0.002,0.033,0.026,0.347\n"
    "128,1.679,-0.001,0.036,0.021,0.600\n";

} // namespace support
