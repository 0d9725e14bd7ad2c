//! One module per subcommand. Each exposes a library entry point taking the
//! effective [`RunConfig`] so the pipeline can be driven without a process.

pub mod align;
pub mod analyze;
pub mod bench;
pub mod estimate;
pub mod synth;
pub mod traineval;

use crate::args::{Cli, Command};
use crate::Outcome;

pub fn dispatch(cli: &Cli) -> anyhow::Result<Outcome> {
    let cfg = cli.effective_config()?;
    match &cli.command {
        Command::Estimate(a) => estimate::run(&a.inputs, &cfg),
        Command::Synth(_) => synth::run(&cfg).map(|s| Outcome::ok(s.items.len())),
        Command::Analyze(a) => match (&a.corpus, &a.real, &a.fake) {
            (Some(corpus), _, _) => analyze::run_corpus(corpus, &cfg).map(|r| Outcome::ok(r.n_items)),
            (None, Some(real), Some(fake)) => analyze::run_pairs(real, fake, &cfg).map(|r| Outcome::ok(r.pairs.len())),
            _ => Err(crate::UsageError("analyze needs --corpus or --real with --fake".into()).into()),
        },
        Command::Align(a) => align::run(&a.real, &a.fake, &a.saliency, &cfg).map(|r| Outcome::ok(r.pairs)),
        Command::Train(a) => traineval::run_train(&a.features, &cfg).map(|t| Outcome::ok(t.split.train.len())),
        Command::Eval(a) => traineval::run_eval(&a.model, &a.features, a.split, &cfg).map(|e| Outcome::ok(e.report.n)),
        Command::Bench(a) => {
            let out = bench::run(&a.inputs, &cfg)?;
            print!("{}", out.table);
            Ok(Outcome::ok(out.measured()))
        }
    }
}
