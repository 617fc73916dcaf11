#include "spacte/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace spacte {

double lambda_at_epoch(const LambdaSchedule& sched, int epoch) {
    if (sched.total_epochs < 2)
        throw std::invalid_argument("lambda schedule needs at least 2 epochs");
    if (epoch < 1 || epoch > sched.total_epochs)
        throw std::invalid_argument("epoch out of schedule range");
    if (epoch == 1) return sched.lambda_ini;
    if (epoch == sched.total_epochs) return sched.lambda_lst;
    const double a =
        (sched.lambda_lst - sched.lambda_ini) / std::log10(static_cast<double>(sched.total_epochs));
    return a * std::log10(static_cast<double>(epoch)) + sched.lambda_ini;
}

double lr_at_epoch(const LrSchedule& sched, int epoch) {
    if (epoch < 1) throw std::invalid_argument("epoch must be >= 1");
    const int drops = (epoch - 1) / sched.period;
    return sched.initial * std::pow(sched.factor, drops);
}

}  // namespace spacte
