//! A gradient write into a two-layer memory built from a sparse
//! distributed memory equals the SDM write of the recall residual.

use mnm::autodiff::Tensor;
use mnm::init::{stream_rng, Stream};
use mnm::memory::sdm::SdmState;
use mnm::memory::{write_gradient, GradientWrite};
use rand::Rng;

fn main() -> mnm::Result<()> {
    let (n, d_v, locations) = (16, 4, 64);
    let mut rng = stream_rng(1, Stream::Trace);
    let mut sdm = SdmState::<f64>::random(locations, n, d_v, 6.0, &mut rng);
    sdm.content = Tensor::new(
        (0..d_v * locations).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        &[d_v, locations],
    )?;
    let key: Vec<f64> = (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
    let key = Tensor::new(key, &[n])?;
    let value = Tensor::new((0..d_v).map(|_| rng.gen_range(-1.0..1.0)).collect(), &[d_v])?;
    let active: f64 = sdm.activation(&key)?.data().iter().sum();
    println!("{active} of {locations} locations within radius");

    // The write loss averages over d_v components, so rate d_v / 2 gives
    // a unit step on the content matrix.
    let rate = Tensor::from_vec(vec![d_v as f64 / 2.0]);
    let written = write_gradient(
        &sdm.as_memory(),
        &[key.reshape(&[1, n])?],
        &[value.reshape(&[1, d_v])?],
        &rate,
        GradientWrite::default(),
    )?;
    let residual = value.sub(&sdm.read(&key)?)?;
    let reference = sdm.write(&key, &residual)?;
    let gap = written.params.layers[1]
        .data()
        .iter()
        .zip(reference.content.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max |gradient write - SDM write| = {gap:e}");
    println!(
        "address layer unchanged: {}",
        written.params.layers[0].data() == sdm.address().data()
    );
    Ok(())
}
