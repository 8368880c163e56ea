interface Shape {
    double area();
}

class Circle implements Shape {
    private final double radius;

    Circle(double radius) {
        this.radius = radius;
    }

    public double area() {
        return Math.PI * radius * radius;
    }
}

class Rectangle implements Shape {
    private final double width;
    private final double height;

    Rectangle(double width, double height) {
        this.width = width;
        this.height = height;
    }

    public double area() {
        return width * height;
    }
}

public class Shapes {
    public static void main(String[] args) {
        Shape[] shapes = {new Circle(1.0), new Rectangle(2.0, 3.0)};
        double total = 0;
        for (Shape s : shapes) {
            total += s.area();
        }
        System.out.printf("%.2f%n", total);
    }
}
