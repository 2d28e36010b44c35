//! Whole-B-scan inference and the mapping of predictions back to dB for scoring.

use octalias_core::dataset::ChannelStats;
use octalias_core::metrics::EvalPair;
use octalias_core::nn::Tensor;
use octalias_core::recon::{background_subtract, BScanImage};
use octalias_core::unet::UNetModel;
use octalias_core::Image;

use crate::error::{Error, Result};
use crate::recon_io::Content;

/// Grows an image to multiples of `m` by repeating its last row and column.
pub fn pad_to_multiple(image: &Image, m: usize) -> Image {
    let rows = image.rows().div_ceil(m) * m;
    let cols = image.cols().div_ceil(m) * m;
    if rows == image.rows() && cols == image.cols() {
        return image.clone();
    }
    Image::from_fn(rows, cols, |r, c| {
        image.get(r.min(image.rows() - 1), c.min(image.cols() - 1))
    })
}

/// Standardizes the real and imaginary channels of one B-scan with their own
/// statistics, runs the network over the whole image and returns the
/// standardized amplitude prediction.
pub fn predict_standardized(model: &UNetModel<f32>, input: &BScanImage) -> Result<Image> {
    let m = model.config().divisor();
    let (rows, cols) = (input.n_depth, input.n_alines);
    let mut data = Vec::new();
    for (channel, name) in [(input.real_image(), "real channel"), (input.imag_image(), "imaginary channel")] {
        let stats = ChannelStats::of(channel.data(), name)?;
        let padded = pad_to_multiple(&channel, m);
        data.extend(padded.data().iter().map(|&v| stats.standardize(v) as f32));
    }
    let (pr, pc) = (rows.div_ceil(m) * m, cols.div_ceil(m) * m);
    let x = Tensor::from_vec(&[1, 2, pr, pc], data).map_err(Error::from)?;
    let y = model.forward(&x)?;
    let full = Image::new(pr, pc, y.data().iter().map(|&v| v as f64).collect())?;
    Ok(full.crop(0, 0, rows, cols)?)
}

/// Amplitude images of one undersampled volume after the same volume-wide
/// dB background subtraction the ground truth receives. This is how network
/// inputs are displayed and scored.
pub fn input_display_images(inputs: &[BScanImage]) -> Result<Vec<Image>> {
    let mut images = inputs.to_vec();
    background_subtract(&mut images)?;
    Ok(images.iter().map(BScanImage::amplitude_image).collect())
}

/// Puts a stored image on the target's dB scale for scoring: standardized
/// predictions are de-standardized with the target's statistics; dB images
/// are used unchanged.
pub fn to_target_scale(image: &Image, content: Content, target_db: &Image) -> Result<Image> {
    if !image.same_shape(target_db) {
        return Err(octalias_core::Error::Shape(format!(
            "prediction {}x{} vs target {}x{}",
            image.rows(),
            image.cols(),
            target_db.rows(),
            target_db.cols()
        ))
        .into());
    }
    let stats = ChannelStats::of(target_db.data(), "target")?;
    Ok(match content {
        Content::Standardized => Image::new(
            image.rows(),
            image.cols(),
            image.data().iter().map(|&v| stats.destandardize(v)).collect(),
        )?,
        Content::Complex | Content::AmplitudeDb => image.clone(),
    })
}

/// Scoring pairs for aligned prediction and target image lists.
pub fn eval_pairs(
    id_prefix: &str,
    predictions: &[Image],
    content: Content,
    targets: &[Image],
    noise_floor_db: f64,
) -> Result<Vec<EvalPair>> {
    if predictions.len() != targets.len() {
        return Err(Error::Data(format!(
            "{id_prefix}: {} predicted B-scans vs {} ground-truth B-scans",
            predictions.len(),
            targets.len()
        )));
    }
    predictions
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (p, t))| {
            Ok(EvalPair {
                image_id: format!("{id_prefix}/b{i:03}"),
                output_db: to_target_scale(p, content, t)?,
                target_db: t.clone(),
                noise_floor_db,
            })
        })
        .collect()
}
