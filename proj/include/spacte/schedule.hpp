#ifndef SPACTE_SCHEDULE_HPP
#define SPACTE_SCHEDULE_HPP

namespace spacte {

// lambda(e) = a*log10(e) + b with b = lambda_ini and
// a = (lambda_lst - lambda_ini)/log10(E), so the endpoints are exact.
struct LambdaSchedule {
    double lambda_ini = 0.0;
    double lambda_lst = 0.0;
    int total_epochs = 0;
};

double lambda_at_epoch(const LambdaSchedule& sched, int epoch);

// Piecewise-constant step decay: initial * factor^floor((e-1)/period).
struct LrSchedule {
    double initial = 0.1;
    double factor = 0.1;
    int period = 50;
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 1e-4;
};

double lr_at_epoch(const LrSchedule& sched, int epoch);

}  // namespace spacte

#endif  // SPACTE_SCHEDULE_HPP
