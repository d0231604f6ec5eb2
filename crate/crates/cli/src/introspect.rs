use std::path::PathBuf;

use act_core::data::{load_dataset, Dataset};
use act_core::infer::{
    attention_maps, cls_attention_scores, frame_drop_sweep, pos_embed_similarity, predict, write_blob, write_curve,
    Alignment, Blob, DropFrom, ScoreNorm,
};
use act_core::train::argmax;
use act_core::{Error, PoseSample, Result, Split, Tensor};
use clap::Args;

use crate::eval::load_members;
use crate::{create_dir, write_manifest};

#[derive(Debug, Clone, Args)]
pub struct IntrospectArgs {
    /// Checkpoint to inspect.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory (POSEPACK v1).
    #[arg(long)]
    pub data: PathBuf,
    /// Sample id whose attention is exported.
    #[arg(long)]
    pub sample: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Frame score normalization: max or sum.
    #[arg(long, default_value = "max")]
    pub score_norm: String,
    /// Positions of frames kept after a head drop: original or reindex.
    #[arg(long, default_value = "original")]
    pub alignment: Alignment,
    /// Skip the frame-drop curves over the test split.
    #[arg(long)]
    pub no_curves: bool,
}

fn id_ranges(dataset: &Dataset) -> String {
    [Split::Train, Split::Test]
        .iter()
        .filter_map(|&split| {
            let s = dataset.split(split);
            Some(format!(
                "{} to {} ({} {split} samples)",
                s.first()?.id,
                s.last()?.id,
                s.len()
            ))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn find_sample<'d>(dataset: &'d Dataset, id: &str) -> Result<&'d PoseSample> {
    dataset
        .find(id)
        .ok_or_else(|| Error::Data(format!("unknown sample id {id:?}; valid ids: {}", id_ranges(dataset))))
}

fn parse_norm(s: &str) -> Result<ScoreNorm> {
    match s {
        "max" => Ok(ScoreNorm::Max),
        "sum" => Ok(ScoreNorm::Sum),
        _ => Err(Error::Parameter(format!(
            "unknown score normalization {s:?}; expected max or sum"
        ))),
    }
}

fn blob(name: &str, labels: &[&str], t: &Tensor<f32>) -> Blob {
    Blob {
        name: name.into(),
        dims: t.shape().to_vec(),
        labels: labels.iter().map(|s| s.to_string()).collect(),
        data: t.data().to_vec(),
    }
}

pub(crate) fn run(args: &IntrospectArgs) -> Result<()> {
    let norm = parse_norm(&args.score_norm)?;
    let dataset = load_dataset(&args.data)?;
    let ckpt = load_members(std::slice::from_ref(&args.model), &dataset)?.remove(0);
    let params = &ckpt.params;
    let sample = find_sample(&dataset, &args.sample)?;
    create_dir(&args.out)?;
    let mut files = Vec::new();

    let maps = attention_maps(params, &sample.features)?;
    let attention_dir = args.out.join("attention");
    create_dir(&attention_dir)?;
    for l in 0..maps.layers() {
        for h in 0..maps.heads() {
            let name = format!("layer{l}-head{h}");
            let path = attention_dir.join(format!("{name}.blob"));
            write_blob(&path, &blob(&name, &["query", "key"], maps.get(l, h)))?;
            files.push(path);
        }
    }

    let scores = cls_attention_scores(params, &sample.features, norm)?;
    let scores = Tensor::new(vec![scores.len()], scores)?;
    let path = args.out.join("cls_scores.blob");
    write_blob(&path, &blob("cls_scores", &["frame"], &scores))?;
    files.push(path);

    let path = args.out.join("pos_similarity.blob");
    write_blob(
        &path,
        &blob(
            "pos_similarity",
            &["position", "position"],
            &pos_embed_similarity(params)?,
        ),
    )?;
    files.push(path);

    if !args.no_curves {
        let test = dataset.split(Split::Test);
        for from in [DropFrom::Head, DropFrom::Tail] {
            let curve = frame_drop_sweep(params, &test, dataset.num_classes(), from, args.alignment)?;
            let path = args.out.join(format!("drop_{from}.csv"));
            write_curve(&path, &curve)?;
            files.push(path);
        }
    }

    let batch = sample.features.clone().reshape(vec![1, sample.len(), sample.width()])?;
    let probabilities = predict(params, &batch)?.into_data();
    let predicted = argmax(&probabilities);
    write_manifest(
        &args.out,
        "introspect",
        serde_json::json!({
            "model": args.model,
            "data": args.data,
            "sample": sample.id,
            "label": dataset.class_names[sample.label],
            "predicted": dataset.class_names[predicted],
            "probabilities": probabilities,
            "score_norm": norm,
            "alignment": args.alignment,
            "attention_maps": maps.count(),
            "files": files,
        }),
    )?;
    println!("sample: {} ({})", sample.id, dataset.class_names[sample.label]);
    println!("predicted: {}", dataset.class_names[predicted]);
    println!("attention_maps: {}", maps.count());
    println!("files: {}", files.len() + 1);
    Ok(())
}
