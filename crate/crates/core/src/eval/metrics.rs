use crate::error::{Error, Result};

/// Rows are gold classes, columns predictions.
pub type Confusion = Vec<Vec<u64>>;

pub fn confusion_matrix(golds: &[usize], preds: &[usize], k: usize) -> Result<Confusion> {
    if golds.len() != preds.len() {
        return Err(Error::Shape {
            what: "gold/prediction lists".into(),
            expected: golds.len().to_string(),
            got: preds.len().to_string(),
        });
    }
    let mut m = vec![vec![0u64; k]; k];
    for (&g, &p) in golds.iter().zip(preds) {
        if g >= k || p >= k {
            return Err(Error::Shape {
                what: "class index".into(),
                expected: format!("< {k}"),
                got: g.max(p).to_string(),
            });
        }
        m[g][p] += 1;
    }
    Ok(m)
}

/// Recall per gold class; `None` for classes without gold items.
pub fn per_class_recall(confusion: &Confusion) -> Vec<Option<f64>> {
    confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            (total > 0).then(|| row[i] as f64 / total as f64)
        })
        .collect()
}

/// Mean recall over classes with at least one gold item.
pub fn uar(confusion: &Confusion) -> Result<f64> {
    let recalls: Vec<f64> = per_class_recall(confusion).into_iter().flatten().collect();
    if recalls.is_empty() {
        return Err(Error::EmptyInput("confusion matrix has no gold items"));
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_fixtures() {
        let ten: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let m = confusion_matrix(&ten, &ten, 3).unwrap();
        assert_eq!(m.iter().flatten().sum::<u64>(), 10);
        assert!((0..3).all(|i| (0..3).all(|j| i == j || m[i][j] == 0)));
        assert_eq!(confusion_matrix(&[], &[], 2).unwrap(), vec![vec![0, 0]; 2]);
        assert_eq!(
            confusion_matrix(&[0, 0, 1], &[0, 1, 1], 2).unwrap(),
            vec![vec![1, 1], vec![0, 1]]
        );
        assert!(confusion_matrix(&[0, 2], &[0, 0], 2).is_err());
        assert!(confusion_matrix(&[0], &[], 2).is_err());
    }

    #[test]
    fn uar_fixtures() {
        assert_eq!(uar(&vec![vec![5, 0], vec![0, 7]]).unwrap(), 1.0);
        assert_eq!(uar(&vec![vec![50, 50], vec![0, 100]]).unwrap(), 0.75);
        let collapsed = (0..4).map(|_| vec![25, 0, 0, 0]).collect();
        assert_eq!(uar(&collapsed).unwrap(), 0.25);
        assert!(uar(&vec![vec![0, 0], vec![0, 0]]).is_err());
        // empty gold row is excluded
        assert_eq!(uar(&vec![vec![3, 1], vec![0, 0]]).unwrap(), 0.75);
        assert_eq!(per_class_recall(&vec![vec![3, 1], vec![0, 0]]), vec![Some(0.75), None]);
    }
}
