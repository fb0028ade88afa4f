use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rffp_core::classifiers::{
    ArchitectureRegistry, Classifier, DeviceClassifier, DistanceClassifier, EnsembleModel,
    ENSEMBLE_FILE,
};
use rffp_core::dataset::{
    build_dataset, save_cache, DatasetSplits, LabeledDataset, Task, WindowOptions,
};
use rffp_core::report::{
    compare_architectures, comparison_svg, ensemble_heatmap, evaluate, heatmap_svg, Arm,
    EvalResult, RunManifest,
};
use rffp_core::seed::{derive, stream};
use rffp_core::sim::{capture_dataset, preset, Manifest};
use rffp_core::training::{
    compare_curriculum, curriculum_fit, finetune_ensemble, fit, StoppingPolicy, TrainConfig,
    TrainReport,
};

use crate::{
    Cli, Command, DataArgs, EnsembleCommand, EvalArgs, ReportCommand, TrainArgs, TrainCommand,
};

struct Ctx {
    seed: u64,
    config: TrainConfig,
    out: PathBuf,
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed,
        config,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Generate(a) => ctx.generate(&a.preset, a.samples_per_capture),
        Command::Dataset(a) => ctx.dataset(&parse_task(&a.task)?, &a.data),
        Command::Train(TrainCommand::Device { distance, train }) => {
            ctx.train(Task::DeviceAtDistance(*distance), train)
        }
        Command::Train(TrainCommand::Distance { train }) => ctx.train(Task::Distance, train),
        Command::Train(TrainCommand::Curriculum {
            task,
            compare,
            threshold,
            train,
        }) => ctx.curriculum(parse_task(task)?, *compare, *threshold, train),
        Command::Ensemble(EnsembleCommand::Assemble { models, into }) => {
            ctx.assemble(models.as_deref(), into.as_deref())
        }
        Command::Ensemble(EnsembleCommand::Finetune {
            ensemble,
            into,
            data,
            epochs,
        }) => ctx.finetune(ensemble.as_deref(), into.as_deref(), data, *epochs),
        Command::Eval(a) => ctx.eval(a),
        Command::Report(ReportCommand::Heatmap { ensemble, data }) => {
            ctx.heatmap(ensemble.as_deref(), data)
        }
        Command::Report(ReportCommand::Compare { arms, data }) => ctx.compare(arms, data),
    }
}

fn parse_task(s: &str) -> Result<Task> {
    s.parse()
        .map_err(|e| anyhow::anyhow!("{e}"))
        .with_context(|| format!("invalid task {s:?}"))
}

/// File-name form of a task: `device@8` becomes `device_008ft`.
fn task_stem(task: &Task) -> String {
    match task {
        Task::DeviceAtDistance(d) => format!("device_{d:03}ft"),
        Task::Distance => "distance".into(),
        Task::Device => "device".into(),
    }
}

fn init_seed(seed: u64, task: &Task) -> u64 {
    let tag = match task {
        Task::DeviceAtDistance(d) => *d as u64,
        Task::Distance => 1 << 32,
        Task::Device => 1 << 33,
    };
    derive(seed, &[stream::INIT, tag])
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

impl Ctx {
    fn dir(&self, given: Option<&Path>, default: &str) -> PathBuf {
        given
            .map(Path::to_path_buf)
            .unwrap_or_else(|| self.out.join(default))
    }

    fn reports(&self) -> PathBuf {
        self.out.join("reports")
    }

    fn manifest(&self, a: &DataArgs) -> Result<Manifest> {
        let path = self.dir(a.data.as_deref(), "data");
        Manifest::load(&path).with_context(|| format!("loading dataset {}", path.display()))
    }

    fn window_options(&self, a: &DataArgs) -> WindowOptions {
        let mut opts = self.config.data.clone();
        if let Some(w) = a.window {
            opts.window = w;
        }
        if let Some(n) = a.max_windows_per_recording {
            opts.max_windows_per_recording = Some(n);
        }
        opts
    }

    fn splits(&self, m: &Manifest, task: Task, opts: &WindowOptions) -> Result<DatasetSplits> {
        Ok(build_dataset(
            m,
            task,
            &self.config.split.to_spec(self.seed),
            opts,
        )?)
    }

    fn policy(&self, epochs: Option<usize>) -> StoppingPolicy {
        let mut p = self.config.stopping.clone();
        if let Some(n) = epochs {
            p.max_epochs = n;
        }
        p
    }

    fn record(&self, command: &str, m: &Manifest, checkpoints: Vec<PathBuf>) -> Result<()> {
        let run = RunManifest {
            command: command.into(),
            dataset: m.root.join("manifest.json"),
            checkpoints,
            config: self.config.clone(),
            seed: self.seed,
            out_dir: self.out.clone(),
        };
        run.check_inputs()?;
        run.save()?;
        Ok(())
    }

    fn generate(&self, name: &str, samples: Option<usize>) -> Result<()> {
        let mut cfg = preset(name)?;
        if let Some(n) = samples {
            cfg.samples_per_capture = n;
        }
        let dir = self.out.join("data");
        let m = capture_dataset(&cfg, self.seed, &dir)?;
        println!(
            "wrote {} recordings to {}",
            m.recordings.len(),
            dir.display()
        );
        Ok(())
    }

    fn dataset(&self, task: &Task, a: &DataArgs) -> Result<()> {
        let m = self.manifest(a)?;
        let s = self.splits(&m, *task, &self.window_options(a))?;
        let dir = self.out.join("datasets");
        let stem = task_stem(task);
        let mut counts = String::from("split,class,count\n");
        for part in [&s.train, &s.val, &s.test] {
            let path = dir.join(format!("{stem}_{}.rfds", part.split.name()));
            fs::create_dir_all(&dir)?;
            save_cache(part, &path)?;
            for (c, n) in part.class_counts().iter().enumerate() {
                counts.push_str(&format!(
                    "{},{},{n}\n",
                    part.split.name(),
                    part.label_names[c]
                ));
            }
        }
        write(&dir.join(format!("{stem}_counts.csv")), &counts)?;
        println!(
            "{task}: {} train, {} val, {} test windows in {}",
            s.train.len(),
            s.val.len(),
            s.test.len(),
            dir.display()
        );
        Ok(())
    }

    fn new_classifier(
        &self,
        task: Task,
        m: &Manifest,
        window: usize,
        arch: Option<&str>,
    ) -> Result<Classifier> {
        let registry = ArchitectureRegistry::with_builtins();
        let arch = registry.get(arch.unwrap_or(&self.config.architecture))?;
        Ok(Classifier::new(
            arch,
            task,
            m,
            window,
            init_seed(self.seed, &task),
        )?)
    }

    fn train(&self, task: Task, a: &TrainArgs) -> Result<()> {
        let m = self.manifest(&a.data)?;
        let opts = self.window_options(&a.data);
        let s = self.splits(&m, task, &opts)?;
        let mut c = self.new_classifier(task, &m, opts.window, a.arch.as_deref())?;
        let mut report = fit(
            &mut c.net,
            &s.train,
            &s.val,
            &self.policy(a.epochs),
            &self.config.optimizer,
            derive(self.seed, &[stream::SHUFFLE]),
        )?;
        let stem = task_stem(&task);
        let card = c.save(&self.dir(a.models.as_deref(), "models"), &stem)?;
        report.checkpoint = Some(card.clone());
        let csv = self.reports().join(format!("train_{stem}.csv"));
        write(&csv, &report.to_csv())?;
        self.record(&format!("train_{stem}"), &m, vec![card.clone()])?;
        summarize(&report, &card);
        Ok(())
    }

    fn curriculum(&self, task: Task, compare: bool, threshold: f64, a: &TrainArgs) -> Result<()> {
        let m = self.manifest(&a.data)?;
        let opts = self.window_options(&a.data);
        let s = self.splits(&m, task, &opts)?;
        let mut c = self.new_classifier(task, &m, opts.window, a.arch.as_deref())?;
        let mut spec = self.config.curriculum.clone();
        spec.seed = derive(self.seed, &[stream::SHUFFLE, 1]);
        let policy = self.policy(a.epochs);
        let stem = format!("curriculum_{}", task_stem(&task));
        if compare {
            let cmp = compare_curriculum(
                &c.net,
                &s.train,
                &s.val,
                &s.test,
                &spec,
                &policy,
                &self.config.optimizer,
                threshold,
            )?;
            write(
                &self.reports().join(format!("{stem}_compare.csv")),
                &cmp.to_csv(),
            )?;
            print!("{}", cmp.to_csv());
        }
        let r = curriculum_fit(
            &mut c.net,
            &s.train,
            &s.val,
            &spec,
            &policy,
            &self.config.optimizer,
        )?;
        write(
            &self.reports().join(format!("{stem}_stage1.csv")),
            &r.stage1.to_csv(),
        )?;
        write(
            &self.reports().join(format!("{stem}_stage2.csv")),
            &r.stage2.to_csv(),
        )?;
        let card = c.save(&self.dir(a.models.as_deref(), "models"), &stem)?;
        self.record(&stem, &m, vec![card.clone()])?;
        println!(
            "stage 1: {} windows, best val acc {:.4}; stage 2: {} windows, best val acc {:.4}",
            r.stage1_indices.len(),
            r.stage1.best_val_acc,
            r.stage2_indices.len(),
            r.stage2.best_val_acc
        );
        println!("saved {}", card.display());
        Ok(())
    }

    fn assemble(&self, models: Option<&Path>, into: Option<&Path>) -> Result<()> {
        let models = self.dir(models, "models");
        let distance_card = models.join("distance.model.json");
        let distance = DistanceClassifier::new(
            Classifier::load(&distance_card)
                .with_context(|| format!("loading {}", distance_card.display()))?,
        )?;
        let mut devices = Vec::new();
        let mut cards = vec![distance_card];
        for &d in distance.distance_labels() {
            let card = models.join(format!(
                "{}.model.json",
                task_stem(&Task::DeviceAtDistance(d))
            ));
            let model = Classifier::load(&card).with_context(|| {
                format!("no device model for {d} ft (looked for {})", card.display())
            })?;
            devices.push(DeviceClassifier::new(model)?);
            cards.push(card);
        }
        let mut e = EnsembleModel::new(distance, devices)?;
        e.combine = self.config.combine;
        let into = self.dir(into, "ensemble");
        let path = e.save(&into)?;
        println!(
            "assembled {} distances x {} devices into {}",
            e.n_distances(),
            e.n_devices(),
            path.display()
        );
        Ok(())
    }

    fn finetune(
        &self,
        ensemble: Option<&Path>,
        into: Option<&Path>,
        a: &DataArgs,
        epochs: Option<usize>,
    ) -> Result<()> {
        let from = self.dir(ensemble, "ensemble");
        let mut e = EnsembleModel::load(&from)
            .with_context(|| format!("loading ensemble {}", from.display()))?;
        let m = self.manifest(a)?;
        let mut opts = self.window_options(a);
        opts.window = e.window();
        let s = self.splits(&m, Task::Device, &opts)?;
        let r = finetune_ensemble(
            &mut e,
            &s.train,
            &s.val,
            &self.policy(epochs),
            &self.config.optimizer,
            derive(self.seed, &[stream::SHUFFLE, 2]),
            &self.config.finetune,
        )?;
        let into = self.dir(into, "ensemble_finetuned");
        let path = e.save(&into)?;
        let mut csv = r.report.to_csv();
        for (k, n) in r.routed_counts.iter().enumerate() {
            csv.push_str(&format!(
                "# routed distance_ft={} windows={n}\n",
                e.distance.distance_labels()[k]
            ));
        }
        write(&self.reports().join("finetune.csv"), &csv)?;
        self.record("finetune", &m, vec![from.join(ENSEMBLE_FILE)])?;
        summarize(&r.report, &path);
        Ok(())
    }

    fn eval(&self, a: &EvalArgs) -> Result<()> {
        let m = self.manifest(&a.data)?;
        let mut opts = self.window_options(&a.data);
        let dir = self.out.join("eval");
        if let Some(card) = &a.model {
            let c =
                Classifier::load(card).with_context(|| format!("loading {}", card.display()))?;
            opts.window = c.window();
            let s = self.splits(&m, c.task, &opts)?;
            let r = evaluate(&c, &s.test)?;
            let stem = task_stem(&c.task);
            write_eval(&dir, &stem, &r)?;
            self.record(&format!("eval_{stem}"), &m, vec![card.clone()])?;
            println!(
                "{stem}: test accuracy {:.4} on {} windows",
                r.accuracy,
                r.total()
            );
        } else {
            let from = a
                .ensemble
                .clone()
                .expect("clap requires --model or --ensemble");
            let e = EnsembleModel::load(&from)
                .with_context(|| format!("loading ensemble {}", from.display()))?;
            opts.window = e.window();
            let s = self.splits(&m, Task::Device, &opts)?;
            let r = rffp_core::report::evaluate_ensemble(&e, &s.test)?;
            write_eval(&dir, "ensemble_device", &r.device)?;
            write_eval(&dir, "ensemble_distance", &r.distance)?;
            self.record("eval_ensemble", &m, vec![from.join(ENSEMBLE_FILE)])?;
            println!(
                "ensemble: device accuracy {:.4}, distance accuracy {:.4} on {} windows",
                r.device.accuracy,
                r.distance.accuracy,
                r.device.total()
            );
        }
        Ok(())
    }

    fn heatmap(&self, ensemble: Option<&Path>, a: &DataArgs) -> Result<()> {
        let from = self.dir(ensemble, "ensemble");
        let e = EnsembleModel::load(&from)
            .with_context(|| format!("loading ensemble {}", from.display()))?;
        let m = self.manifest(a)?;
        let mut opts = self.window_options(a);
        opts.window = e.window();
        let s = self.splits(&m, Task::Device, &opts)?;
        let (grid, _) = ensemble_heatmap(&e, &s.test)?;
        write(&self.reports().join("heatmap.csv"), &grid.to_csv())?;
        write(&self.reports().join("heatmap.svg"), &heatmap_svg(&grid))?;
        self.record("report_heatmap", &m, vec![from.join(ENSEMBLE_FILE)])?;
        print!("{}", grid.to_csv());
        Ok(())
    }

    fn compare(&self, arms: &[(String, PathBuf)], a: &DataArgs) -> Result<()> {
        let m = self.manifest(a)?;
        let mut models: Vec<Vec<Classifier>> = Vec::new();
        let mut tests: Vec<Vec<LabeledDataset>> = Vec::new();
        let mut cards = Vec::new();
        for (name, dir) in arms {
            let (mut ms, mut ts) = (Vec::new(), Vec::new());
            for &d in &m.distances_ft {
                let task = Task::DeviceAtDistance(d);
                let card = dir.join(format!("{}.model.json", task_stem(&task)));
                let c = Classifier::load(&card).with_context(|| {
                    format!("arm {name}: no model for {d} ft at {}", card.display())
                })?;
                let mut opts = self.window_options(a);
                opts.window = c.window();
                ts.push(self.splits(&m, task, &opts)?.test);
                ms.push(c);
                cards.push(card);
            }
            models.push(ms);
            tests.push(ts);
        }
        if arms.is_empty() {
            bail!("nothing to compare");
        }
        let arms: Vec<Arm<'_>> = arms
            .iter()
            .zip(&models)
            .zip(&tests)
            .map(|(((name, _), ms), ts)| Arm {
                name: name.clone(),
                models: ms.iter().collect(),
                tests: ts.iter().collect(),
            })
            .collect();
        let table = compare_architectures(&m.distances_ft, &arms)?;
        write(&self.reports().join("compare.csv"), &table.to_csv())?;
        write(&self.reports().join("compare.svg"), &comparison_svg(&table))?;
        self.record("report_compare", &m, cards)?;
        print!("{}", table.to_csv());
        Ok(())
    }
}

fn write_eval(dir: &Path, stem: &str, r: &EvalResult) -> Result<()> {
    write(&dir.join(format!("{stem}_metrics.csv")), &r.metrics_csv())?;
    write(
        &dir.join(format!("{stem}_confusion.csv")),
        &r.confusion_csv(),
    )
}

fn summarize(report: &TrainReport, saved: &Path) {
    println!(
        "{} after {} epochs; best val acc {:.4} at epoch {}; saved {}",
        report.stop_reason.name(),
        report.epochs.len(),
        report.best_val_acc,
        report.best_epoch,
        saved.display()
    );
    for w in &report.warnings {
        println!("warning: {w}");
    }
}
