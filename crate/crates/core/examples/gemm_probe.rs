use std::time::Instant;

#[allow(clippy::too_many_arguments)]
fn dgemm_nt(
    m: usize,
    n: usize,
    k: usize,
    a: &[f64],
    rsa: usize,
    b: &[f64],
    rsb: usize,
    beta: f64,
    c: &mut [f64],
) {
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            1,
            b.as_ptr(),
            1,
            rsb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn main() {
    let m = 64usize;
    let k = 1024usize;
    let cells = 256usize;
    let a: Vec<f64> = (0..m * k).map(|i| ((i * 37 % 101) as f64) * 0.01).collect();
    let b: Vec<f64> = (0..m * k).map(|i| ((i * 53 % 97) as f64) * 0.01).collect();
    let mut c = vec![0.0; m * m];

    for chunk in [1024usize, 512, 256, 128] {
        let t0 = Instant::now();
        for _ in 0..cells {
            let mut k0 = 0;
            while k0 < k {
                let kc = chunk.min(k - k0);
                dgemm_nt(
                    m,
                    m,
                    kc,
                    &a[k0..],
                    k,
                    &b[k0..],
                    k,
                    if k0 == 0 { 0.0 } else { 1.0 },
                    &mut c,
                );
                k0 += kc;
            }
        }
        let dt = t0.elapsed().as_secs_f64();
        let gf = (2.0 * (m * m * k * cells) as f64) / dt / 1e9;
        println!(
            "chunk {chunk:4}: {:7.2} ms per {cells} cells  {gf:5.1} GF/s",
            dt * 1000.0
        );
    }

    // f32 for comparison
    let af: Vec<f32> = a.iter().map(|&v| v as f32).collect();
    let bf: Vec<f32> = b.iter().map(|&v| v as f32).collect();
    let mut cf = vec![0.0f32; m * m];
    let t0 = Instant::now();
    for _ in 0..cells {
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                m,
                1.0,
                af.as_ptr(),
                k as isize,
                1,
                bf.as_ptr(),
                1,
                k as isize,
                0.0,
                cf.as_mut_ptr(),
                m as isize,
                1,
            );
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    let gf = (2.0 * (m * m * k * cells) as f64) / dt / 1e9;
    println!("f32 full  : {:7.2} ms per {cells} cells  {gf:5.1} GF/s", dt * 1000.0);

    println!("c[0] = {} cf[0] = {}", c[0], cf[0]);
}
